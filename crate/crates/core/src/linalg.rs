//! Small dense helpers shared by several stages.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Row-major copy of a matrix, handy for cache-friendly row scans.
#[derive(Debug, Clone)]
pub struct Rows {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Rows {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(m[(i, j)]);
            }
        }
        Rows { data, n, d }
    }

    pub fn from_vec(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::DimensionMismatch(data.len(), n * d));
        }
        Ok(Rows { data, n, d })
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Rows {
            data,
            n: rows.len(),
            d: self.d,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.data)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Orthogonal `W` minimising `||target - source W||_F`, from the SVD of
/// `source^T target`.
pub fn orthogonal_procrustes(source: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if source.shape() != target.shape() {
        return Err(Error::DimensionMismatch(source.nrows(), target.nrows()));
    }
    let m = source.transpose() * target;
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::invalid("SVD failed to produce singular vectors"));
    };
    Ok(u * v_t)
}

/// Principal square root of a symmetric positive semidefinite matrix.
/// Eigenvalues in `[-1e-10, 0)` are treated as round-off and clipped.
/// On failure returns the offending eigenvalue.
pub fn psd_sqrt(m: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -1e-10 {
            return Err(*v);
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&vals) * q.transpose())
}

/// Flips each column so that its entry of largest magnitude is positive.
/// Near-ties resolve to the lowest row index.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let col = m.column(j);
        let max = col.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if max == 0.0 {
            continue;
        }
        let pivot = col
            .iter()
            .position(|&x| x.abs() >= max * (1.0 - 1e-10))
            .unwrap_or(0);
        if m[(pivot, j)] < 0.0 {
            m.column_mut(j).neg_mut();
        }
    }
}

/// Largest row norm of a matrix (the 2 -> infinity norm).
pub fn two_to_infinity_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}
