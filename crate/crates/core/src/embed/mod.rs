//! Adjacency spectral embedding and embedding-dimension selection.

pub mod lanczos;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::elbow::{profile_likelihood_elbows, ElbowChoice};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::linalg::fix_column_signs;

pub use lanczos::{largest_magnitude, LanczosOptions, SymmetricOperator};

/// Estimated latent positions `X = U |S|^{1/2}` together with the signed
/// eigenvalues they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub x_hat: DMatrix<f64>,
    /// Selected eigenvalues of the adjacency matrix, signed.
    pub eigenvalues: Vec<f64>,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.x_hat.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x_hat.ncols()
    }

    /// `|lambda|` of each selected eigenpair, in selection order.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.abs()).collect()
    }

    /// Number of selected eigenvalues that are negative. The generative
    /// model is positive semidefinite, so these usually mark noise
    /// directions.
    pub fn negative_count(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l < 0.0).count()
    }

    /// Embedding restricted to the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> Embedding {
        Embedding {
            x_hat: self.x_hat.select_rows(rows),
            eigenvalues: self.eigenvalues.clone(),
        }
    }
}

/// Adjacency spectral embedding of a graph into `d` dimensions.
pub fn ase(g: &SparseGraph, d: usize) -> Result<Embedding> {
    if g.n_edges() == 0 {
        let n = g.n_vertices();
        if d == 0 || d >= n {
            return Err(Error::invalid(format!("embedding dimension {d} must be in 1..{n}")));
        }
        return Ok(Embedding {
            x_hat: DMatrix::zeros(n, d),
            eigenvalues: vec![0.0; d],
        });
    }
    ase_operator(g, d, &LanczosOptions::default())
}

/// Spectral embedding of any symmetric operator (for example a dense
/// probability matrix).
pub fn ase_operator<O: SymmetricOperator + ?Sized>(
    op: &O,
    d: usize,
    opts: &LanczosOptions,
) -> Result<Embedding> {
    let n = op.dim();
    if d == 0 || d >= n {
        return Err(Error::invalid(format!("embedding dimension {d} must be in 1..{n}")));
    }
    let pairs = largest_magnitude(op, d, opts)?;
    Ok(embedding_from_pairs(pairs.values, pairs.vectors))
}

/// Scales eigenvectors by `sqrt|lambda|` after fixing their signs.
pub(crate) fn embedding_from_pairs(values: Vec<f64>, mut vectors: DMatrix<f64>) -> Embedding {
    fix_column_signs(&mut vectors);
    for (c, l) in values.iter().enumerate() {
        let s = l.abs().sqrt();
        vectors.column_mut(c).scale_mut(s);
    }
    let neg = values.iter().filter(|&&l| l < 0.0).count();
    if neg > 0 {
        log::debug!("{neg} of {} selected eigenvalues are negative", values.len());
    }
    Embedding {
        x_hat: vectors,
        eigenvalues: values,
    }
}

/// The `m` largest eigenvalue magnitudes of the adjacency matrix, descending.
pub fn scree(g: &SparseGraph, m: usize) -> Result<Vec<f64>> {
    let n = g.n_vertices();
    if m == 0 || m >= n {
        return Err(Error::invalid(format!("scree length {m} must be in 1..{n}")));
    }
    if g.n_edges() == 0 {
        return Ok(vec![0.0; m]);
    }
    let pairs = largest_magnitude(g, m, &LanczosOptions::default())?;
    Ok(pairs.values.iter().map(|l| l.abs()).collect())
}

/// Outcome of choosing an embedding dimension from the scree curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionChoice {
    pub dim: usize,
    pub magnitudes: Vec<f64>,
    /// Set when the spectrum was flat and the fallback of 1 was used.
    pub flat: bool,
}

pub fn select_dimension(g: &SparseGraph, max_dim: usize, which: ElbowChoice) -> Result<DimensionChoice> {
    let magnitudes = scree(g, max_dim)?;
    Ok(choose_dimension(magnitudes, which))
}

/// Elbow of an already computed, descending scree curve.
pub fn choose_dimension(magnitudes: Vec<f64>, which: ElbowChoice) -> DimensionChoice {
    let elbows = profile_likelihood_elbows(&magnitudes, which.count());
    if elbows.flat {
        warn!("flat scree curve; using embedding dimension 1");
    }
    let dim = match which {
        ElbowChoice::First => elbows.elbows[0],
        ElbowChoice::Second => *elbows.elbows.last().expect("at least one elbow"),
    };
    DimensionChoice {
        dim,
        magnitudes,
        flat: elbows.flat,
    }
}

/// Rows rescaled to unit length. Zero rows stay zero; their count is
/// returned alongside.
pub fn project_to_sphere(e: &Embedding) -> (Embedding, usize) {
    let mut x = e.x_hat.clone();
    let mut zero = 0;
    for mut row in x.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row.unscale_mut(norm);
        } else {
            zero += 1;
        }
    }
    if zero > 0 {
        warn!("{zero} zero rows left unprojected");
    }
    (
        Embedding {
            x_hat: x,
            eigenvalues: e.eigenvalues.clone(),
        },
        zero,
    )
}
