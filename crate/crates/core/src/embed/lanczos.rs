//! Restarted Lanczos for the eigenpairs of largest magnitude.
//!
//! The basis is kept fully reorthogonalised (classical Gram-Schmidt, two
//! passes), and the projected matrix is accumulated from the
//! orthogonalisation coefficients, so a thick restart only has to keep the
//! selected Ritz vectors and the current residual direction.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// A real symmetric linear operator.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for SparseGraph {
    fn dim(&self) -> usize {
        self.n_vertices()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut s = 0.0;
            for j in 0..n {
                s += self[(j, i)] * x[j];
            }
            *yi = s;
        });
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Residual tolerance relative to the largest Ritz value magnitude.
    pub tolerance: f64,
    pub max_restarts: usize,
    /// Seed for the start vector (and for any breakdown restarts).
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tolerance: 1e-10,
            max_restarts: 500,
            seed: 0x5eed_1a2c,
        }
    }
}

/// Eigenpairs sorted by decreasing magnitude (positive first on ties).
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// `n x k`, orthonormal columns.
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub matvecs: usize,
}

pub fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .abs()
            .total_cmp(&values[a].abs())
            .then(values[b].total_cmp(&values[a]))
            .then(a.cmp(&b))
    });
    idx
}

struct Basis {
    n: usize,
    cols: Vec<Vec<f64>>,
}

impl Basis {
    /// Orthogonalises `w` against every stored column (two passes) and
    /// returns the accumulated coefficients.
    fn orthogonalize(&self, w: &mut [f64]) -> Vec<f64> {
        let mut coeffs = vec![0.0; self.cols.len()];
        for _ in 0..2 {
            let h: Vec<f64> = self
                .cols
                .par_iter()
                .map(|c| c.iter().zip(w.iter()).map(|(a, b)| a * b).sum())
                .collect();
            w.par_iter_mut().enumerate().for_each(|(r, wr)| {
                let mut s = 0.0;
                for (c, hc) in self.cols.iter().zip(&h) {
                    s += hc * c[r];
                }
                *wr -= s;
            });
            for (c, hc) in coeffs.iter_mut().zip(h) {
                *c += hc;
            }
        }
        coeffs
    }

    fn random_unit(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let mut w: Vec<f64> = (0..self.n).map(|_| rng.random::<f64>() - 0.5).collect();
            self.orthogonalize(&mut w);
            let norm = norm(&w);
            if norm > 1e-8 {
                w.iter_mut().for_each(|x| *x /= norm);
                return w;
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Computes the `k` eigenpairs of `op` with the largest `|lambda|`.
pub fn largest_magnitude<O: SymmetricOperator + ?Sized>(
    op: &O,
    k: usize,
    opts: &LanczosOptions,
) -> Result<EigenPairs> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "requested {k} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let m = n.min((2 * k + 20).max(k + 32));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis = Basis {
        n,
        cols: Vec::with_capacity(m + 1),
    };
    let start = basis.random_unit(&mut rng);
    basis.cols.push(start);

    // Projected matrix H = V^T A V for the first `j` basis vectors.
    let mut h = DMatrix::<f64>::zeros(m, m);
    let mut j = 0usize;
    let mut restarts = 0usize;
    let mut matvecs = 0usize;
    let mut w = vec![0.0; n];
    let mut scale = 0.0f64;

    loop {
        let mut beta_last = 0.0;
        while j < m {
            op.apply(&basis.cols[j], &mut w);
            matvecs += 1;
            let coeffs = basis.orthogonalize(&mut w);
            for (i, &c) in coeffs.iter().enumerate().take(j + 1) {
                h[(i, j)] = c;
                h[(j, i)] = c;
            }
            let beta = norm(&w);
            scale = scale.max(coeffs.iter().fold(beta, |a, c| a.max(c.abs())));
            j += 1;
            if basis.cols.len() == n {
                beta_last = 0.0;
                break;
            }
            let next = if beta <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                // Invariant subspace: continue from a fresh direction.
                beta_last = 0.0;
                basis.random_unit(&mut rng)
            } else {
                beta_last = beta;
                w.iter().map(|x| x / beta).collect()
            };
            basis.cols.push(next);
        }

        let hj = h.view((0, 0), (j, j)).into_owned();
        let eig = SymmetricEigen::new(hj);
        let order = magnitude_order(eig.eigenvalues.as_slice());
        let top_mag = eig.eigenvalues[order[0]].abs();
        let residual = |i: usize| (beta_last * eig.eigenvectors[(j - 1, i)]).abs();
        let wanted = k.min(j);
        let residuals: Vec<f64> = order[..wanted].iter().map(|&i| residual(i)).collect();
        let tol = opts.tolerance * top_mag.max(scale * 1e-3).max(f64::MIN_POSITIVE);
        let converged = wanted == k && residuals.iter().all(|&r| r <= tol);

        if converged {
            let sel = &order[..k];
            let values = sel.iter().map(|&i| eig.eigenvalues[i]).collect();
            let vectors = ritz_vectors(&basis, &eig.eigenvectors, sel, j);
            return Ok(EigenPairs {
                values,
                vectors,
                residuals,
                matvecs,
            });
        }
        restarts += 1;
        if restarts > opts.max_restarts {
            return Err(Error::NoConvergence {
                restarts: opts.max_restarts,
                residuals,
            });
        }

        let keep = (k + (m - k) / 2).min(j - 1).max(k.min(j - 1));
        let sel = &order[..keep];
        let kept = ritz_vectors(&basis, &eig.eigenvectors, sel, j);
        let residual_vec = basis.cols.pop().expect("basis holds the residual direction");
        basis.cols.clear();
        for c in 0..keep {
            basis.cols.push(kept.column(c).iter().copied().collect());
        }
        basis.cols.push(residual_vec);
        h.fill(0.0);
        for (c, &i) in sel.iter().enumerate() {
            h[(c, c)] = eig.eigenvalues[i];
        }
        j = keep;
    }
}

fn ritz_vectors(basis: &Basis, s: &DMatrix<f64>, sel: &[usize], j: usize) -> DMatrix<f64> {
    let n = basis.n;
    let mut out = DMatrix::<f64>::zeros(n, sel.len());
    for (c, &i) in sel.iter().enumerate() {
        let coeffs: Vec<f64> = (0..j).map(|r| s[(r, i)]).collect();
        let col: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|row| {
                let mut acc = 0.0;
                for (b, &cf) in basis.cols[..j].iter().zip(&coeffs) {
                    acc += cf * b[row];
                }
                acc
            })
            .collect();
        out.column_mut(c).copy_from_slice(&col);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> SparseGraph {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        SparseGraph::from_edges(n, edges).unwrap()
    }

    #[test]
    fn complete_graph_spectrum() {
        let g = complete(4);
        let e = largest_magnitude(&g, 4, &LanczosOptions::default()).unwrap();
        let expect = [3.0, -1.0, -1.0, -1.0];
        for (a, b) in e.values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10, "{:?}", e.values);
        }
    }

    #[test]
    fn repeated_eigenvalues_in_larger_graph() {
        // Two disjoint K5's plus a path: eigenvalue 4 has multiplicity two.
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for b in [0, 5] {
            for i in 0..5 {
                for j in i + 1..5 {
                    edges.push((b + i, b + j));
                }
            }
        }
        for i in 10..79 {
            edges.push((i, i + 1));
        }
        let g = SparseGraph::from_edges(80, edges).unwrap();
        let e = largest_magnitude(&g, 2, &LanczosOptions::default()).unwrap();
        assert!((e.values[0] - 4.0).abs() < 1e-9 && (e.values[1] - 4.0).abs() < 1e-9, "{:?}", e.values);
    }

    #[test]
    fn agrees_with_dense_solver_and_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 120;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if (i < 60) == (j < 60) { 0.3 } else { 0.05 };
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = SparseGraph::from_edges(n, edges).unwrap();
        let e = largest_magnitude(&g, 6, &LanczosOptions::default()).unwrap();
        let dense = SymmetricEigen::new(g.to_dense());
        let order = magnitude_order(dense.eigenvalues.as_slice());
        for c in 0..6 {
            assert!((e.values[c] - dense.eigenvalues[order[c]]).abs() < 1e-9);
        }
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::identity(6, 6)).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_bad_k() {
        let g = complete(3);
        assert!(largest_magnitude(&g, 0, &LanczosOptions::default()).is_err());
        assert!(largest_magnitude(&g, 4, &LanczosOptions::default()).is_err());
    }
}
