//! Slow, dense reference implementations used to cross-check the fast
//! paths. Everything here is deterministic and meant for `n` up to a few
//! thousand.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::embed::lanczos::magnitude_order;
use crate::embed::{embedding_from_pairs, Embedding};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::linalg::{orthogonal_procrustes, two_to_infinity_norm};

const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcrustesResult {
    /// Orthogonal `d x d` matrix minimising `|X_hat - X W|_F`.
    pub w: DMatrix<f64>,
    pub frobenius_residual: f64,
    /// Largest row norm of `X_hat - X W`.
    pub two_inf_residual: f64,
}

pub fn procrustes_align(x_hat: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<ProcrustesResult> {
    let w = orthogonal_procrustes(x, x_hat)?;
    let diff = x_hat - x * &w;
    Ok(ProcrustesResult {
        frobenius_residual: diff.norm(),
        two_inf_residual: two_to_infinity_norm(&diff),
        w,
    })
}

/// Full dense eigendecomposition, top `d` by magnitude, same sign
/// convention as [`crate::embed::ase`].
pub fn dense_ase_reference(m: &DMatrix<f64>, d: usize) -> Result<Embedding> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(n, m.ncols()));
    }
    if n > DENSE_LIMIT {
        return Err(Error::invalid(format!("dense reference limited to n <= {DENSE_LIMIT}")));
    }
    if d == 0 || d >= n {
        return Err(Error::invalid(format!("embedding dimension {d} must be in 1..{n}")));
    }
    let eig = SymmetricEigen::new(m.clone());
    let order = magnitude_order(eig.eigenvalues.as_slice());
    let sel = &order[..d];
    let values = sel.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(sel);
    Ok(embedding_from_pairs(values, vectors))
}

pub fn dense_ase_graph(g: &SparseGraph, d: usize) -> Result<Embedding> {
    dense_ase_reference(&g.to_dense(), d)
}

/// Literal triple-sum transcription of the unbiased statistic.
pub fn mmd_bruteforce(x: &DMatrix<f64>, y: &DMatrix<f64>, sigma: f64) -> Result<f64> {
    let (n, m) = (x.nrows(), y.nrows());
    if n > 200 || m > 200 {
        return Err(Error::invalid("brute-force statistic limited to 200 rows per sample"));
    }
    if n < 2 || m < 2 || x.ncols() != y.ncols() {
        return Err(Error::invalid("need two samples of at least two rows and equal dimension"));
    }
    let k = |a: nalgebra::DVectorView<f64>, b: nalgebra::DVectorView<f64>| {
        let mut s = 0.0;
        for c in 0..a.len() {
            s += (a[c] - b[c]).powi(2);
        }
        (-s / (sigma * sigma)).exp()
    };
    let xr: Vec<_> = (0..n).map(|i| x.row(i).transpose()).collect();
    let yr: Vec<_> = (0..m).map(|i| y.row(i).transpose()).collect();
    let mut first = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                first += k(xr[i].as_view(), xr[j].as_view());
            }
        }
    }
    let mut cross = 0.0;
    for xi in &xr {
        for yj in &yr {
            cross += k(xi.as_view(), yj.as_view());
        }
    }
    let mut third = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                third += k(yr[i].as_view(), yr[j].as_view());
            }
        }
    }
    let (nf, mf) = (n as f64, m as f64);
    Ok(first / (nf * (nf - 1.0)) - 2.0 * cross / (nf * mf) + third / (mf * (mf - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusReport {
    /// `min_W |X_hat - X_P W|_F`, with `X_P` the rank-`d` spectral
    /// embedding of `P = rho X X^T`.
    pub ase_residual: f64,
    /// `|(A - P) U_P S_P^{-1/2}|_F`.
    pub leading_term: f64,
    /// `|ase_residual - leading_term|`.
    pub gap: f64,
    pub two_inf_residual: f64,
}

/// Compares the embedding error of `a` against the first-order term built
/// from the true probability matrix.
pub fn frobenius_residual_check(a: &SparseGraph, x: &DMatrix<f64>, rho: f64, d: usize) -> Result<FrobeniusReport> {
    frobenius_residual_dense(&a.to_dense(), x, rho, d)
}

/// As [`frobenius_residual_check`] for a dense symmetric `a`, which may
/// also be a probability matrix.
pub fn frobenius_residual_dense(a: &DMatrix<f64>, x: &DMatrix<f64>, rho: f64, d: usize) -> Result<FrobeniusReport> {
    let n = a.nrows();
    if x.nrows() != n {
        return Err(Error::DimensionMismatch(x.nrows(), n));
    }
    let p = (x * x.transpose()) * rho;
    let truth = dense_ase_reference(&p, d)?;
    let x_hat = dense_ase_reference(a, d)?;
    let aligned = procrustes_align(&x_hat.x_hat, &truth.x_hat)?;

    // U_P S_P^{-1/2} = X_P S_P^{-1}
    let mut u_scaled = truth.x_hat.clone();
    for (c, l) in truth.eigenvalues.iter().enumerate() {
        let s = if l.abs() > 0.0 { 1.0 / l.abs() } else { 0.0 };
        u_scaled.column_mut(c).scale_mut(s);
    }
    let leading = ((a - &p) * u_scaled).norm();
    Ok(FrobeniusReport {
        ase_residual: aligned.frobenius_residual,
        leading_term: leading,
        gap: (aligned.frobenius_residual - leading).abs(),
        two_inf_residual: aligned.two_inf_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_alignment() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 0.5, 0.0, 2.0]);
        let r = procrustes_align(&x, &x).unwrap();
        assert!((r.w - DMatrix::identity(2, 2)).abs().max() < 1e-12);
        assert!(r.frobenius_residual < 1e-12 && r.two_inf_residual < 1e-12);
    }

    #[test]
    fn k4_dense_spectrum() {
        let edges = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j)));
        let g = SparseGraph::from_edges(4, edges).unwrap();
        let e = dense_ase_graph(&g, 3).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!(e.eigenvalues[1..].iter().all(|l| (l + 1.0).abs() < 1e-12));
    }

    #[test]
    fn exact_probability_matrix_has_zero_terms() {
        let x = DMatrix::from_fn(6, 2, |i, j| if (i < 3) == (j == 0) { 0.8 } else { 0.1 });
        let p = &x * x.transpose();
        let e = dense_ase_reference(&p, 2).unwrap();
        let r = procrustes_align(&e.x_hat, &x).unwrap();
        assert!(r.frobenius_residual < 1e-8);
    }

    #[test]
    fn probability_matrix_as_input_gives_zero_terms() {
        let x = DMatrix::from_fn(8, 2, |i, j| if (i < 4) == (j == 0) { 0.7 } else { 0.2 });
        let p = &x * x.transpose();
        let r = frobenius_residual_dense(&p, &x, 1.0, 2).unwrap();
        assert!(r.ase_residual < 1e-8 && r.leading_term < 1e-8, "{r:?}");
    }

    #[test]
    fn bruteforce_closed_form() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        let y = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        let v = mmd_bruteforce(&x, &y, 1.0).unwrap();
        assert!((v - (2.0 - 2.0 * (-0.25f64).exp())).abs() < 1e-15);
        assert_eq!(mmd_bruteforce(&x, &x, 1.0).unwrap(), 0.0);
    }
}
