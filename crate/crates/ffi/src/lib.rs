//! C interface to `hsbm-motif`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns an
//! [`HsbmStatus`]; on failure the message is available from
//! [`hsbm_last_error_message`] on the same thread until the next failing
//! call. Panics are caught and reported as [`HsbmStatus::Internal`].
//!
//! Matrices are passed row-major as `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hsbm_motif::cluster::seeded_subspace_cluster;
use hsbm_motif::embed::{ase, Embedding};
use hsbm_motif::graph::load_edge_list;
use hsbm_motif::hsbm::{sample_hsbm, HsbmSpec};
use hsbm_motif::motif::{mmd_statistic, KernelConfig};
use hsbm_motif::pipeline::{detect_hierarchy, PipelineConfig};
use hsbm_motif::report::hierarchy_report;
use hsbm_motif::rng::SeedStream;
use hsbm_motif::{Error, SparseGraph};
use nalgebra::DMatrix;

/// Result code of every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsbmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    /// Model or numerical failure: invalid spec, eigensolver divergence,
    /// dimension mismatch.
    Numerical = 5,
    /// A panic inside the library.
    Internal = 6,
}

/// Undirected simple graph.
pub struct HsbmGraph {
    inner: SparseGraph,
}

/// Adjacency spectral embedding of a graph.
pub struct HsbmEmbedding {
    inner: Embedding,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HsbmStatus {
    match e {
        Error::Parse { .. } | Error::Json(_) => HsbmStatus::Parse,
        Error::Io(_) => HsbmStatus::Io,
        Error::InvalidArgument(_) | Error::EmptyInput(_) | Error::IndexOutOfRange { .. } => {
            HsbmStatus::InvalidArgument
        }
        Error::Context { source, .. } => status_of(source),
        _ => HsbmStatus::Numerical,
    }
}

struct Failure(HsbmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(HsbmStatus::Parse, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(HsbmStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(HsbmStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HsbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsbmStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            HsbmStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(HsbmStatus::Internal, "output contains a NUL byte".into()))
}

/// Message of the last failure on this thread, or NULL if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hsbm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Forgets the last error message of this thread.
#[no_mangle]
pub extern "C" fn hsbm_clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Builds a graph on `n` vertices from `m` edges `(src[k], dst[k])`.
/// Self-loops and duplicates are dropped.
///
/// # Safety
/// `src` and `dst` must point to `m` readable values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hsbm_graph_from_edges(
    n: usize,
    src: *const u32,
    dst: *const u32,
    m: usize,
    out: *mut *mut HsbmGraph,
) -> HsbmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let src = slice_arg(src, m, "src")?;
        let dst = slice_arg(dst, m, "dst")?;
        let g = SparseGraph::from_edges(n, src.iter().zip(dst).map(|(&a, &b)| (a as usize, b as usize)))?;
        *out = Box::into_raw(Box::new(HsbmGraph { inner: g }));
        Ok(())
    })
}

/// Reads a whitespace-separated edge list.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hsbm_graph_load(path: *const c_char, out: *mut *mut HsbmGraph) -> HsbmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let file = File::open(path).map_err(Error::from)?;
        let (g, _) = load_edge_list(BufReader::new(file))?;
        *out = Box::into_raw(Box::new(HsbmGraph { inner: g }));
        Ok(())
    })
}

/// Samples a graph from a JSON model specification. Vertex `i` of the result
/// belongs to the `i`-th block in depth-first order, as in the command-line
/// `generate`, which uses the same seed derivation.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hsbm_generate(spec_json: *const c_char, seed: u64, out: *mut *mut HsbmGraph) -> HsbmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec: HsbmSpec = serde_json::from_str(str_arg(spec_json, "spec_json")?)?;
        let (g, _) = sample_hsbm(&spec, &mut SeedStream::new(seed).derive("sample").rng())?;
        *out = Box::into_raw(Box::new(HsbmGraph { inner: g }));
        Ok(())
    })
}

/// # Safety
/// `graph` must be NULL or a handle returned by this library that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn hsbm_graph_free(graph: *mut HsbmGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of vertices, or 0 for NULL.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hsbm_graph_vertex_count(graph: *const HsbmGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.n_vertices())
}

/// Number of undirected edges, or 0 for NULL.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hsbm_graph_edge_count(graph: *const HsbmGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.n_edges())
}

/// Embeds `graph` into `d` dimensions.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hsbm_ase(graph: *const HsbmGraph, d: usize, out: *mut *mut HsbmEmbedding) -> HsbmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = handle(graph, "graph")?;
        let e = ase(&g.inner, d)?;
        *out = Box::into_raw(Box::new(HsbmEmbedding { inner: e }));
        Ok(())
    })
}

/// # Safety
/// `embedding` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hsbm_embedding_free(embedding: *mut HsbmEmbedding) {
    if !embedding.is_null() {
        drop(Box::from_raw(embedding));
    }
}

/// Rows of the embedding, or 0 for NULL.
///
/// # Safety
/// `embedding` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hsbm_embedding_rows(embedding: *const HsbmEmbedding) -> usize {
    embedding.as_ref().map_or(0, |e| e.inner.n())
}

/// Columns of the embedding, or 0 for NULL.
///
/// # Safety
/// `embedding` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hsbm_embedding_dim(embedding: *const HsbmEmbedding) -> usize {
    embedding.as_ref().map_or(0, |e| e.inner.dim())
}

/// Copies the coordinates row-major into `buffer`, which must hold exactly
/// `rows * dim` values.
///
/// # Safety
/// `embedding` must be a live handle; `buffer` must have `len` writable
/// values.
#[no_mangle]
pub unsafe extern "C" fn hsbm_embedding_copy(
    embedding: *const HsbmEmbedding,
    buffer: *mut f64,
    len: usize,
) -> HsbmStatus {
    guard(|| {
        let e = &handle(embedding, "embedding")?.inner;
        if len != e.n() * e.dim() {
            return Err(invalid(format!("buffer holds {len} values, embedding has {}", e.n() * e.dim())));
        }
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        let dst = std::slice::from_raw_parts_mut(buffer, len);
        for i in 0..e.n() {
            for c in 0..e.dim() {
                dst[i * e.dim() + c] = e.x_hat[(i, c)];
            }
        }
        Ok(())
    })
}

/// Copies the `dim` eigenvalues in decreasing magnitude.
///
/// # Safety
/// `embedding` must be a live handle; `buffer` must have `len` writable
/// values.
#[no_mangle]
pub unsafe extern "C" fn hsbm_embedding_eigenvalues(
    embedding: *const HsbmEmbedding,
    buffer: *mut f64,
    len: usize,
) -> HsbmStatus {
    guard(|| {
        let e = &handle(embedding, "embedding")?.inner;
        if len != e.dim() {
            return Err(invalid(format!("buffer holds {len} values, embedding has {}", e.dim())));
        }
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        std::slice::from_raw_parts_mut(buffer, len).copy_from_slice(&e.eigenvalues);
        Ok(())
    })
}

/// Splits the rows of `embedding` into `r` clusters. `labels` receives one
/// label in `0..r` per row.
///
/// # Safety
/// `embedding` must be a live handle; `labels` must have `len` writable
/// values.
#[no_mangle]
pub unsafe extern "C" fn hsbm_cluster(
    embedding: *const HsbmEmbedding,
    r: usize,
    seed: u64,
    labels: *mut u32,
    len: usize,
) -> HsbmStatus {
    guard(|| {
        let e = &handle(embedding, "embedding")?.inner;
        if len != e.n() {
            return Err(invalid(format!("label buffer holds {len} values, embedding has {} rows", e.n())));
        }
        if labels.is_null() {
            return Err(null("labels"));
        }
        let (part, _) = seeded_subspace_cluster(&e.x_hat, r, &mut SeedStream::new(seed).derive("cluster").rng())?;
        let dst = std::slice::from_raw_parts_mut(labels, len);
        for (d, &l) in dst.iter_mut().zip(part.labels()) {
            *d = l as u32;
        }
        Ok(())
    })
}

/// Unbiased kernel two-sample statistic between the `n x dim` sample `x`
/// and the `m x dim` sample `y`. A non-positive `sigma` selects the median
/// bandwidth.
///
/// # Safety
/// `x` and `y` must hold `n * dim` and `m * dim` readable values; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn hsbm_mmd(
    x: *const f64,
    n: usize,
    y: *const f64,
    m: usize,
    dim: usize,
    sigma: f64,
    out: *mut f64,
) -> HsbmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        let xs = slice_arg(x, n * dim, "x")?;
        let ys = slice_arg(y, m * dim, "y")?;
        let kernel = if sigma > 0.0 {
            KernelConfig::fixed(sigma)
        } else {
            KernelConfig::default()
        };
        *out = mmd_statistic(
            &DMatrix::from_row_slice(n, dim, xs),
            &DMatrix::from_row_slice(m, dim, ys),
            &kernel,
        )?;
        Ok(())
    })
}

/// Runs the recursive detection on `graph` and returns the hierarchy as a
/// JSON string in `*out_json`, released with [`hsbm_string_free`].
/// `config_json` may be NULL for the default configuration; it uses the same
/// keys as the command-line `--config` file.
///
/// # Safety
/// `graph` must be a live handle; `config_json` must be NULL or a
/// NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hsbm_detect(
    graph: *const HsbmGraph,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> HsbmStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let g = &handle(graph, "graph")?.inner;
        let cfg: PipelineConfig = if config_json.is_null() {
            PipelineConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)?
        };
        let root = detect_hierarchy(g, &cfg)?;
        let report = hierarchy_report(&root, g, &cfg, "");
        *out = into_c_string(serde_json::to_string(&report)?)?;
        Ok(())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string returned by this library that has not been
/// freed.
#[no_mangle]
pub unsafe extern "C" fn hsbm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hsbm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
