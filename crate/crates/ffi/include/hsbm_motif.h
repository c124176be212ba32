#ifndef HSBM_MOTIF_H
#define HSBM_MOTIF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible function.
 */
typedef enum HsbmStatus {
  HSBM_STATUS_OK = 0,
  HSBM_STATUS_NULL_POINTER = 1,
  HSBM_STATUS_INVALID_ARGUMENT = 2,
  HSBM_STATUS_PARSE = 3,
  HSBM_STATUS_IO = 4,
  /**
   * Model or numerical failure: invalid spec, eigensolver divergence,
   * dimension mismatch.
   */
  HSBM_STATUS_NUMERICAL = 5,
  /**
   * A panic inside the library.
   */
  HSBM_STATUS_INTERNAL = 6,
} HsbmStatus;

/**
 * Adjacency spectral embedding of a graph.
 */
typedef struct HsbmEmbedding HsbmEmbedding;

/**
 * Undirected simple graph.
 */
typedef struct HsbmGraph HsbmGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *hsbm_last_error_message(void);

/**
 * Forgets the last error message of this thread.
 */
void hsbm_clear_last_error(void);

/**
 * Builds a graph on `n` vertices from `m` edges `(src[k], dst[k])`.
 * Self-loops and duplicates are dropped.
 *
 * # Safety
 * `src` and `dst` must point to `m` readable values; `out` must be
 * writable.
 */
enum HsbmStatus hsbm_graph_from_edges(size_t n,
                                      const uint32_t *src,
                                      const uint32_t *dst,
                                      size_t m,
                                      struct HsbmGraph **out);

/**
 * Reads a whitespace-separated edge list.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HsbmStatus hsbm_graph_load(const char *path, struct HsbmGraph **out);

/**
 * Samples a graph from a JSON model specification. Vertex `i` of the result
 * belongs to the `i`-th block in depth-first order, as in the command-line
 * `generate`, which uses the same seed derivation.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` must be writable.
 */
enum HsbmStatus hsbm_generate(const char *spec_json, uint64_t seed, struct HsbmGraph **out);

/**
 * # Safety
 * `graph` must be NULL or a handle returned by this library that has not
 * been freed.
 */
void hsbm_graph_free(struct HsbmGraph *graph);

/**
 * Number of vertices, or 0 for NULL.
 *
 * # Safety
 * `graph` must be NULL or a live handle.
 */
size_t hsbm_graph_vertex_count(const struct HsbmGraph *graph);

/**
 * Number of undirected edges, or 0 for NULL.
 *
 * # Safety
 * `graph` must be NULL or a live handle.
 */
size_t hsbm_graph_edge_count(const struct HsbmGraph *graph);

/**
 * Embeds `graph` into `d` dimensions.
 *
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum HsbmStatus hsbm_ase(const struct HsbmGraph *graph, size_t d, struct HsbmEmbedding **out);

/**
 * # Safety
 * `embedding` must be NULL or a live handle.
 */
void hsbm_embedding_free(struct HsbmEmbedding *embedding);

/**
 * Rows of the embedding, or 0 for NULL.
 *
 * # Safety
 * `embedding` must be NULL or a live handle.
 */
size_t hsbm_embedding_rows(const struct HsbmEmbedding *embedding);

/**
 * Columns of the embedding, or 0 for NULL.
 *
 * # Safety
 * `embedding` must be NULL or a live handle.
 */
size_t hsbm_embedding_dim(const struct HsbmEmbedding *embedding);

/**
 * Copies the coordinates row-major into `buffer`, which must hold exactly
 * `rows * dim` values.
 *
 * # Safety
 * `embedding` must be a live handle; `buffer` must have `len` writable
 * values.
 */
enum HsbmStatus hsbm_embedding_copy(const struct HsbmEmbedding *embedding,
                                    double *buffer,
                                    size_t len);

/**
 * Copies the `dim` eigenvalues in decreasing magnitude.
 *
 * # Safety
 * `embedding` must be a live handle; `buffer` must have `len` writable
 * values.
 */
enum HsbmStatus hsbm_embedding_eigenvalues(const struct HsbmEmbedding *embedding,
                                           double *buffer,
                                           size_t len);

/**
 * Splits the rows of `embedding` into `r` clusters. `labels` receives one
 * label in `0..r` per row.
 *
 * # Safety
 * `embedding` must be a live handle; `labels` must have `len` writable
 * values.
 */
enum HsbmStatus hsbm_cluster(const struct HsbmEmbedding *embedding,
                             size_t r,
                             uint64_t seed,
                             uint32_t *labels,
                             size_t len);

/**
 * Unbiased kernel two-sample statistic between the `n x dim` sample `x`
 * and the `m x dim` sample `y`. A non-positive `sigma` selects the median
 * bandwidth.
 *
 * # Safety
 * `x` and `y` must hold `n * dim` and `m * dim` readable values; `out` must
 * be writable.
 */
enum HsbmStatus hsbm_mmd(const double *x,
                         size_t n,
                         const double *y,
                         size_t m,
                         size_t dim,
                         double sigma,
                         double *out);

/**
 * Runs the recursive detection on `graph` and returns the hierarchy as a
 * JSON string in `*out_json`, released with [`hsbm_string_free`].
 * `config_json` may be NULL for the default configuration; it uses the same
 * keys as the command-line `--config` file.
 *
 * # Safety
 * `graph` must be a live handle; `config_json` must be NULL or a
 * NUL-terminated string; `out_json` must be writable.
 */
enum HsbmStatus hsbm_detect(const struct HsbmGraph *graph,
                            const char *config_json,
                            char **out_json);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a string returned by this library that has not been
 * freed.
 */
void hsbm_string_free(char *s);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hsbm_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HSBM_MOTIF_H */
