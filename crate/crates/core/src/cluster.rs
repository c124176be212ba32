//! Seeded nearest-neighbour subspace clustering and estimation of the
//! number of subgraphs.
//!
//! The first sweep keeps a set of `R` seed rows and replaces one member of
//! the most similar seed pair whenever a row is less similar to every seed
//! than that pair is to itself. Once rows of different subgraphs are nearly
//! orthogonal, the surviving seeds sit one per subgraph. The second sweep
//! assigns each row to the seed with which it has the largest dot product.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elbow::profile_likelihood_elbows;
use crate::error::{Error, Result};
use crate::graph::VertexPartition;
use crate::linalg::{dot, Rows};
use crate::rng::SeedStream;

/// Seed rows surviving the first sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSet {
    /// `R x d`, one seed per row.
    pub vectors: DMatrix<f64>,
    /// Row of the input each seed was copied from.
    pub source_rows: Vec<usize>,
    /// Largest dot product between two distinct seeds (0 when `R = 1`).
    pub max_pair_dot: f64,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.source_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_rows.is_empty()
    }
}

/// Most similar distinct pair `(a, b)` with `a < b`; ties go to the
/// lexicographically smallest pair.
fn max_pair(gram: &[f64], r: usize) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for a in 0..r {
        for b in a + 1..r {
            let g = gram[a * r + b];
            if best.is_none_or(|(_, _, v)| g > v) {
                best = Some((a, b, g));
            }
        }
    }
    best
}

fn first_sweep<R: Rng + ?Sized>(x: &Rows, r: usize, rng: &mut R) -> Result<SeedSet> {
    let n = x.n();
    if r == 0 || r > n {
        return Err(Error::invalid(format!("cannot pick {r} seeds from {n} rows")));
    }
    let mut rows: Vec<usize> = sample(rng, n, r).into_vec();
    let mut gram = vec![0.0; r * r];
    for a in 0..r {
        for b in 0..r {
            gram[a * r + b] = dot(x.row(rows[a]), x.row(rows[b]));
        }
    }
    let mut dots = vec![0.0; r];
    for i in 0..n {
        if rows.contains(&i) {
            continue;
        }
        let Some((_, z, pair)) = max_pair(&gram, r) else {
            break;
        };
        let xi = x.row(i);
        let mut closest = f64::NEG_INFINITY;
        for (s, d) in dots.iter_mut().enumerate() {
            *d = dot(xi, x.row(rows[s]));
            closest = closest.max(*d);
        }
        if closest < pair {
            rows[z] = i;
            for s in 0..r {
                gram[z * r + s] = dots[s];
                gram[s * r + z] = dots[s];
            }
            gram[z * r + z] = dot(xi, xi);
        }
    }
    let max_pair_dot = max_pair(&gram, r).map_or(0.0, |(_, _, v)| v);
    let vectors = DMatrix::from_fn(r, x.dim(), |s, c| x.row(rows[s])[c]);
    Ok(SeedSet {
        vectors,
        source_rows: rows,
        max_pair_dot,
    })
}

/// Runs the first sweep only and returns the seed set.
pub fn select_seeds<R: Rng + ?Sized>(x_hat: &DMatrix<f64>, r: usize, rng: &mut R) -> Result<SeedSet> {
    first_sweep(&Rows::from_matrix(x_hat), r, rng)
}

/// Clusters the rows of `x_hat` into `r` groups. Seed rows are assigned to
/// their own cluster so that no cluster is empty; every other row goes to
/// the seed with the largest dot product (lowest index on ties).
pub fn seeded_subspace_cluster<R: Rng + ?Sized>(
    x_hat: &DMatrix<f64>,
    r: usize,
    rng: &mut R,
) -> Result<(VertexPartition, SeedSet)> {
    let x = Rows::from_matrix(x_hat);
    let seeds = first_sweep(&x, r, rng)?;
    let seed_rows = Rows::from_matrix(&seeds.vectors);
    let mut labels: Vec<usize> = (0..x.n())
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            let mut best = 0;
            let mut best_dot = f64::NEG_INFINITY;
            for s in 0..r {
                let d = dot(xi, seed_rows.row(s));
                if d > best_dot {
                    best_dot = d;
                    best = s;
                }
            }
            best
        })
        .collect();
    for (s, &row) in seeds.source_rows.iter().enumerate() {
        labels[row] = s;
    }
    Ok((VertexPartition::new(labels, r)?, seeds))
}

/// Largest in-set dot product after the first sweep with `k` seeds.
pub fn phi_statistic<R: Rng + ?Sized>(x_hat: &DMatrix<f64>, k: usize, rng: &mut R) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid("phi needs at least two seeds"));
    }
    Ok(select_seeds(x_hat, k, rng)?.max_pair_dot)
}

/// The phi curve and the subgraph count read from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphCountEstimate {
    pub r_hat: usize,
    /// Candidate counts `2..=d_hat`.
    pub ks: Vec<usize>,
    /// Mean phi per candidate.
    pub phi: Vec<f64>,
}

impl SubgraphCountEstimate {
    /// Candidate `k` whose step to `k + 1` is the largest increase of phi.
    pub fn largest_jump(&self) -> Option<usize> {
        (0..self.phi.len().saturating_sub(1))
            .max_by(|&a, &b| {
                let da = self.phi[a + 1] - self.phi[a];
                let db = self.phi[b + 1] - self.phi[b];
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .map(|i| self.ks[i])
    }
}

/// Reads the subgraph count off a phi curve over `k = 2, 3, ...`.
///
/// The increments `phi(k + 1) - phi(k)` are sorted in decreasing order and
/// split by the profile-likelihood elbow into large and small ones. The
/// estimate is the smallest `k` whose increment is large. With a single
/// increment the elbow is undefined; it then counts as large when it
/// exceeds `phi(2)`.
pub fn count_from_phi(phi: &[f64]) -> usize {
    match phi.len() {
        0 | 1 => 2,
        2 => {
            if phi[1] - phi[0] > phi[0] {
                2
            } else {
                3
            }
        }
        _ => {
            let inc: Vec<f64> = phi.windows(2).map(|w| w[1] - w[0]).collect();
            let mut order: Vec<usize> = (0..inc.len()).collect();
            order.sort_by(|&a, &b| inc[b].total_cmp(&inc[a]).then(a.cmp(&b)));
            let sorted: Vec<f64> = order.iter().map(|&i| inc[i]).collect();
            let large = profile_likelihood_elbows(&sorted, 1).elbows[0];
            order[..large].iter().min().copied().unwrap_or(0) + 2
        }
    }
}

/// Estimates the number of subgraphs from `n_mc` averaged phi curves for
/// `k = 2..=d_hat`. Runs are seeded per `(k, run)` so the result does not
/// depend on scheduling.
pub fn estimate_num_subgraphs<R: Rng + ?Sized>(
    x_hat: &DMatrix<f64>,
    d_hat: usize,
    n_mc: usize,
    rng: &mut R,
) -> Result<SubgraphCountEstimate> {
    if d_hat < 2 {
        return Err(Error::invalid(format!("d_hat = {d_hat}; need at least 2")));
    }
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be at least 1"));
    }
    let n = x_hat.nrows();
    if d_hat > n {
        return Err(Error::invalid(format!("d_hat = {d_hat} exceeds the {n} rows")));
    }
    let x = Rows::from_matrix(x_hat);
    let stream = SeedStream::new(rng.random());
    let ks: Vec<usize> = (2..=d_hat).collect();
    let jobs: Vec<(usize, usize)> = ks.iter().flat_map(|&k| (0..n_mc).map(move |m| (k, m))).collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(k, m)| {
            let mut r = stream.derive_index(k as u64).derive_index(m as u64).rng();
            first_sweep(&x, k, &mut r).map(|s| s.max_pair_dot)
        })
        .collect::<Result<_>>()?;
    let phi: Vec<f64> = values
        .chunks(n_mc)
        .map(|c| c.iter().sum::<f64>() / n_mc as f64)
        .collect();
    Ok(SubgraphCountEstimate {
        r_hat: count_from_phi(&phi),
        ks,
        phi,
    })
}

fn confusion(tau_hat: &VertexPartition, tau: &VertexPartition) -> Vec<Vec<usize>> {
    let k = tau_hat.n_clusters().max(tau.n_clusters());
    let mut c = vec![vec![0usize; k]; k];
    for (&a, &b) in tau_hat.labels().iter().zip(tau.labels()) {
        c[a][b] += 1;
    }
    c
}

/// Maximum-weight perfect matching by dynamic programming over subsets.
pub(crate) fn best_matching_dp(w: &[Vec<usize>]) -> usize {
    let k = w.len();
    let mut dp = vec![usize::MIN; 1 << k];
    let mut reached = vec![false; 1 << k];
    reached[0] = true;
    for mask in 0usize..(1 << k) {
        if !reached[mask] {
            continue;
        }
        let row = mask.count_ones() as usize;
        if row == k {
            continue;
        }
        for col in 0..k {
            if mask & (1 << col) == 0 {
                let next = mask | (1 << col);
                let v = dp[mask] + w[row][col];
                if !reached[next] || v > dp[next] {
                    dp[next] = v;
                    reached[next] = true;
                }
            }
        }
    }
    dp[(1 << k) - 1]
}

/// Maximum-weight perfect matching with the Hungarian method (potentials
/// form, on costs `max - w`).
pub(crate) fn best_matching_hungarian(w: &[Vec<usize>]) -> usize {
    let k = w.len();
    if k == 0 {
        return 0;
    }
    let max = w.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost = |i: usize, j: usize| max - w[i][j] as i64;
    // 1-based arrays; p[j] = row matched to column j.
    let mut u = vec![0i64; k + 1];
    let mut v = vec![0i64; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=k).map(|j| w[p[j] - 1][j - 1]).sum()
}

/// Fewest vertices whose label disagrees with `tau` under the best
/// relabelling of `tau_hat`. The cluster counts may differ; the smaller
/// side is padded with empty clusters.
pub fn misclustering_rate(tau_hat: &VertexPartition, tau: &VertexPartition) -> Result<usize> {
    if tau_hat.n_vertices() != tau.n_vertices() {
        return Err(Error::DimensionMismatch(tau_hat.n_vertices(), tau.n_vertices()));
    }
    let c = confusion(tau_hat, tau);
    let matched = if c.len() <= 12 {
        best_matching_dp(&c)
    } else {
        best_matching_hungarian(&c)
    };
    Ok(tau.n_vertices() - matched)
}
