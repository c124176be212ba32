//! Hierarchical stochastic blockmodel (HSBM) tooling.
//!
//! The crate covers the whole loop of recovering multi-level community
//! structure from a single graph:
//!
//! * [`hsbm`] builds latent positions for nested blockmodels and samples
//!   random dot product graphs from them;
//! * [`embed`] computes adjacency spectral embeddings with a restarted
//!   Lanczos solver and picks embedding dimensions from the scree curve;
//! * [`cluster`] runs seeded nearest-neighbour subspace clustering and
//!   estimates the number of subgraphs;
//! * [`motif`] compares embedded subgraphs with a kernel two-sample
//!   statistic and groups them into motifs;
//! * [`pipeline`] ties the stages together into the recursive
//!   detect / embed / cluster / test procedure.
//!
//! Dense reference implementations used for verification live in
//! [`oracle`] behind the default `oracle` feature.

pub mod cluster;
pub mod elbow;
pub mod embed;
pub mod error;
pub mod graph;
pub mod hsbm;
pub mod io;
pub mod linalg;
pub mod motif;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod pipeline;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use graph::{SparseGraph, VertexPartition};
