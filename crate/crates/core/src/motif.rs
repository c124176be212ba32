//! Kernel two-sample tests between embedded subgraphs and grouping of
//! subgraphs into motifs.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthogonal_procrustes, sq_dist, Rows};
use crate::rng::SeedStream;

/// Pooled samples larger than this are subsampled by stride when the median
/// bandwidth is computed.
const MEDIAN_SAMPLE_CAP: usize = 2000;
/// Largest pooled sample for which the permutation test caches the kernel
/// matrix.
const KERNEL_CACHE_CAP: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// Median pairwise distance of the pooled sample.
    Median,
    Fixed(f64),
}

/// Gaussian kernel `exp(-|x - y|^2 / sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidth: Bandwidth::Median,
        }
    }
}

impl KernelConfig {
    pub fn fixed(sigma: f64) -> Self {
        KernelConfig {
            bandwidth: Bandwidth::Fixed(sigma),
        }
    }

    /// Bandwidth to use for the pair `(x, y)`.
    pub fn resolve(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
            Bandwidth::Fixed(s) => Err(Error::invalid(format!("bandwidth {s} must be positive"))),
            Bandwidth::Median => {
                check_dims(x, y)?;
                Ok(median_distance(&Rows::from_matrix(x), &Rows::from_matrix(y)))
            }
        }
    }
}

/// Median pairwise distance of the pooled rows; 1 when every distance is 0.
fn median_distance(x: &Rows, y: &Rows) -> f64 {
    let total = x.n() + y.n();
    let stride = total.div_ceil(MEDIAN_SAMPLE_CAP).max(1);
    let pooled: Vec<&[f64]> = (0..total)
        .step_by(stride)
        .map(|i| if i < x.n() { x.row(i) } else { y.row(i - x.n()) })
        .collect();
    let mut d: Vec<f64> = (0..pooled.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let pooled = &pooled;
            (i + 1..pooled.len()).map(move |j| sq_dist(pooled[i], pooled[j]))
        })
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let m = m.sqrt();
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn check_dims(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(x.ncols(), y.ncols()));
    }
    Ok(())
}

#[inline]
fn kernel(a: &[f64], b: &[f64], inv_s2: f64) -> f64 {
    (-sq_dist(a, b) * inv_s2).exp()
}

/// Sum of kernel values over ordered pairs, computed row by row and added
/// up in row order so the result does not depend on the thread count.
fn kernel_sum(a: &Rows, b: &Rows, inv_s2: f64, skip_diagonal: bool) -> f64 {
    let partial: Vec<f64> = (0..a.n())
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            (0..b.n())
                .filter(|&j| !(skip_diagonal && i == j))
                .map(|j| kernel(ai, b.row(j), inv_s2))
                .sum()
        })
        .collect();
    partial.iter().sum()
}

fn unbiased(x: &Rows, y: &Rows, sigma: f64) -> f64 {
    let inv = 1.0 / (sigma * sigma);
    let (n, m) = (x.n() as f64, y.n() as f64);
    kernel_sum(x, x, inv, true) / (n * (n - 1.0)) - 2.0 * kernel_sum(x, y, inv, false) / (n * m)
        + kernel_sum(y, y, inv, true) / (m * (m - 1.0))
}

fn check_sizes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    check_dims(x, y)?;
    if x.nrows() < 2 || y.nrows() < 2 {
        return Err(Error::invalid(format!(
            "two-sample statistic needs at least two rows per sample (got {} and {})",
            x.nrows(),
            y.nrows()
        )));
    }
    Ok(())
}

/// Unbiased kernel two-sample statistic. Can be negative.
pub fn mmd_statistic(x: &DMatrix<f64>, y: &DMatrix<f64>, k: &KernelConfig) -> Result<f64> {
    check_sizes(x, y)?;
    let sigma = k.resolve(x, y)?;
    Ok(unbiased(&Rows::from_matrix(x), &Rows::from_matrix(y), sigma))
}

fn linear(x: &Rows, y: &Rows, sigma: f64, rng: &mut impl Rng) -> Result<f64> {
    let l = x.n().min(y.n());
    if l < 4 {
        return Err(Error::invalid(format!("linear statistic needs at least 4 rows per sample (got {l})")));
    }
    let mut px: Vec<usize> = (0..x.n()).collect();
    let mut py: Vec<usize> = (0..y.n()).collect();
    px.shuffle(rng);
    py.shuffle(rng);
    let inv = 1.0 / (sigma * sigma);
    let blocks = l / 2;
    let mut total = 0.0;
    for b in 0..blocks {
        let (x1, x2) = (x.row(px[2 * b]), x.row(px[2 * b + 1]));
        let (y1, y2) = (y.row(py[2 * b]), y.row(py[2 * b + 1]));
        total += kernel(x1, x2, inv) + kernel(y1, y2, inv) - kernel(x1, y2, inv) - kernel(x2, y1, inv);
    }
    Ok(total / blocks as f64)
}

/// Linear-time estimate: both samples are shuffled, truncated to the
/// shorter length and split into consecutive pairs.
pub fn mmd_linear<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    k: &KernelConfig,
    rng: &mut R,
) -> Result<f64> {
    check_dims(x, y)?;
    let sigma = k.resolve(x, y)?;
    let mut r = SeedStream::new(rng.random()).rng();
    linear(&Rows::from_matrix(x), &Rows::from_matrix(y), sigma, &mut r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMode {
    #[default]
    Exact,
    Linear,
}

/// Observed statistic with its permutation p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub sigma: f64,
    pub replicates: usize,
}

/// Permutation p-value: the pooled rows are re-split uniformly `b` times
/// into samples of the original sizes and
/// `p = (1 + #{T_b >= T_obs}) / (b + 1)`.
pub fn bootstrap_pvalue<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    k: &KernelConfig,
    mode: TestMode,
    b: usize,
    rng: &mut R,
) -> Result<TestOutcome> {
    if b == 0 {
        return Err(Error::invalid("at least one permutation replicate is needed"));
    }
    check_sizes(x, y)?;
    let sigma = k.resolve(x, y)?;
    permutation_test(&Rows::from_matrix(x), &Rows::from_matrix(y), sigma, mode, b, SeedStream::new(rng.random()))
}

fn pooled(x: &Rows, y: &Rows) -> Rows {
    let mut data = Vec::with_capacity((x.n() + y.n()) * x.dim());
    for i in 0..x.n() {
        data.extend_from_slice(x.row(i));
    }
    for i in 0..y.n() {
        data.extend_from_slice(y.row(i));
    }
    Rows::from_vec(data, x.n() + y.n(), x.dim()).expect("consistent pooled shape")
}

fn permutation_test(x: &Rows, y: &Rows, sigma: f64, mode: TestMode, b: usize, stream: SeedStream) -> Result<TestOutcome> {
    let (n, m) = (x.n(), y.n());
    let total = n + m;
    let z = pooled(x, y);
    let observed = match mode {
        TestMode::Exact => unbiased(x, y, sigma),
        TestMode::Linear => linear(x, y, sigma, &mut stream.derive("observed").rng())?,
    };
    let split = |rep: usize| {
        let mut idx: Vec<usize> = (0..total).collect();
        idx.shuffle(&mut stream.derive_index(rep as u64).rng());
        idx
    };
    let null: Vec<f64> = match mode {
        TestMode::Exact if total <= KERNEL_CACHE_CAP => {
            let cache = KernelCache::new(&z, sigma);
            (0..b)
                .into_par_iter()
                .map(|rep| cache.statistic(&split(rep)[..n]))
                .collect()
        }
        TestMode::Exact => (0..b)
            .into_par_iter()
            .map(|rep| {
                let idx = split(rep);
                unbiased(&z.subset(&idx[..n]), &z.subset(&idx[n..]), sigma)
            })
            .collect(),
        TestMode::Linear => (0..b)
            .into_par_iter()
            .map(|rep| {
                let idx = split(rep);
                let mut r = stream.derive("linear").derive_index(rep as u64).rng();
                linear(&z.subset(&idx[..n]), &z.subset(&idx[n..]), sigma, &mut r)
            })
            .collect::<Result<_>>()?,
    };
    let exceed = null.iter().filter(|&&t| t >= observed).count();
    Ok(TestOutcome {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (b + 1) as f64,
        sigma,
        replicates: b,
    })
}

/// Pooled kernel matrix with row sums, so that each permutation only needs
/// the quadratic form over the first sample.
struct KernelCache {
    k: Vec<f64>,
    row_sums: Vec<f64>,
    off_diagonal_total: f64,
    total: usize,
}

impl KernelCache {
    fn new(z: &Rows, sigma: f64) -> Self {
        let total = z.n();
        let inv = 1.0 / (sigma * sigma);
        let rows: Vec<Vec<f64>> = (0..total)
            .into_par_iter()
            .map(|i| (0..total).map(|j| kernel(z.row(i), z.row(j), inv)).collect())
            .collect();
        let row_sums: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
        let off_diagonal_total = row_sums.iter().sum::<f64>() - total as f64;
        KernelCache {
            k: rows.concat(),
            row_sums,
            off_diagonal_total,
            total,
        }
    }

    fn statistic(&self, first: &[usize]) -> f64 {
        let n = first.len() as f64;
        let m = (self.total - first.len()) as f64;
        let mut quad = 0.0;
        let mut rows = 0.0;
        for &i in first {
            let base = i * self.total;
            rows += self.row_sums[i];
            for &j in first {
                quad += self.k[base + j];
            }
        }
        let xx = quad - n;
        let xy = rows - quad;
        let yy = self.off_diagonal_total - xx - 2.0 * xy;
        xx / (n * (n - 1.0)) - 2.0 * xy / (n * m) + yy / (m * (m - 1.0))
    }
}

/// Rows taken at a fixed stride, at most `cap` of them.
fn stride_subset(x: &Rows, cap: usize) -> Rows {
    if x.n() <= cap {
        return x.clone();
    }
    let stride = x.n().div_ceil(cap);
    let idx: Vec<usize> = (0..x.n()).step_by(stride).collect();
    x.subset(&idx)
}

fn nearest(point: &[f64], set: &Rows) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..set.n() {
        let d = sq_dist(point, set.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn apply(x: &Rows, w: &DMatrix<f64>) -> Rows {
    Rows::from_matrix(&(x.to_matrix() * w))
}

/// Mean nearest-neighbour distance from `a` to `b` plus from `b` to `a`.
fn chamfer(a: &Rows, b: &Rows) -> f64 {
    let ab: f64 = (0..a.n()).map(|i| nearest(a.row(i), b).1.sqrt()).sum::<f64>() / a.n() as f64;
    let ba: f64 = (0..b.n()).map(|i| nearest(b.row(i), a).1.sqrt()).sum::<f64>() / b.n() as f64;
    ab + ba
}

fn sign_patterns(d: usize) -> Vec<Vec<f64>> {
    if d <= 6 {
        (0..1usize << d)
            .map(|mask| (0..d).map(|c| if mask >> c & 1 == 1 { -1.0 } else { 1.0 }).collect())
            .collect()
    } else {
        let mut out = vec![vec![1.0; d]];
        for c in 0..d {
            let mut s = vec![1.0; d];
            s[c] = -1.0;
            out.push(s);
        }
        out
    }
}

/// Eigenvectors of `m^T m`, ordered by decreasing eigenvalue.
fn principal_axes(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(m.transpose() * m);
    let mut order: Vec<usize> = (0..m.ncols()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    eig.eigenvectors.select_columns(&order)
}

/// Starting rotations: sign flips of the coordinate axes, and maps from the
/// principal axes of `moving` onto those of `reference` under every sign
/// pattern.
fn starts(reference: &DMatrix<f64>, moving: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let d = reference.ncols();
    let vr = principal_axes(reference);
    let vm = principal_axes(moving);
    let diag = |s: &[f64]| DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(s));
    let patterns = sign_patterns(d);
    let mut out: Vec<DMatrix<f64>> = patterns.iter().map(|s| &vm * diag(s) * vr.transpose()).collect();
    if d <= 4 {
        out.extend(patterns.iter().map(|s| diag(s)));
    } else {
        out.push(DMatrix::identity(d, d));
    }
    out
}

/// Orthogonal `W` such that the rows of `moving * W` resemble the rows of
/// `reference` as point clouds. No row correspondence is assumed: from
/// several starting rotations, nearest-neighbour matches and Procrustes
/// updates alternate, and the candidate with the smallest symmetric
/// Chamfer distance wins.
pub fn align_point_clouds(reference: &DMatrix<f64>, moving: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(reference, moving)?;
    let r = stride_subset(&Rows::from_matrix(reference), 300);
    let mv = stride_subset(&Rows::from_matrix(moving), 300);
    let mv_m = mv.to_matrix();
    let candidates: Vec<(f64, DMatrix<f64>)> = starts(&r.to_matrix(), &mv_m)
        .into_par_iter()
        .map(|start| {
            let mut w = start;
            for _ in 0..15 {
                let moved = apply(&mv, &w);
                let matched: Vec<usize> = (0..moved.n()).map(|i| nearest(moved.row(i), &r).0).collect();
                let target = r.subset(&matched).to_matrix();
                let next = match orthogonal_procrustes(&mv_m, &target) {
                    Ok(next) => next,
                    Err(_) => break,
                };
                let change = (&next - &w).abs().max();
                w = next;
                if change < 1e-10 {
                    break;
                }
            }
            (chamfer(&r, &apply(&mv, &w)), w)
        })
        .collect();
    let best = candidates
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.0.total_cmp(&b.0).then(ia.cmp(ib)))
        .map(|(_, c)| c.1)
        .expect("at least one start");
    Ok(best)
}

/// How pairs of subgraph embeddings are compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotifTestConfig {
    pub kernel: KernelConfig,
    pub mode: TestMode,
    /// Permutation replicates per pair; 0 skips p-values.
    pub bootstrap: usize,
    /// Rotate the second embedding of each pair onto the first before
    /// testing.
    pub align: bool,
    /// Optional cap on the rows used per subgraph (stride subsample).
    pub max_rows: Option<usize>,
}

impl Default for MotifTestConfig {
    fn default() -> Self {
        MotifTestConfig {
            kernel: KernelConfig::default(),
            mode: TestMode::Exact,
            bootstrap: 0,
            align: true,
            max_rows: None,
        }
    }
}

/// Pairwise statistics between subgraphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityMatrix {
    pub s_hat: DMatrix<f64>,
    /// Present when permutation replicates were requested; diagonal 1.
    pub p_values: Option<DMatrix<f64>>,
    pub subgraph_sizes: Vec<usize>,
    /// Bandwidth used for each pair (diagonal 0).
    pub sigmas: DMatrix<f64>,
}

impl DissimilarityMatrix {
    pub fn len(&self) -> usize {
        self.subgraph_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraph_sizes.is_empty()
    }
}

/// Compares every pair of subgraph embeddings.
pub fn dissimilarity_matrix<R: Rng + ?Sized>(
    embeddings: &[DMatrix<f64>],
    cfg: &MotifTestConfig,
    rng: &mut R,
) -> Result<DissimilarityMatrix> {
    let r = embeddings.len();
    if let Some(first) = embeddings.first() {
        for e in embeddings {
            check_dims(first, e)?;
        }
    }
    let stream = SeedStream::new(rng.random());
    let rows: Vec<Rows> = embeddings
        .iter()
        .map(|e| {
            let rows = Rows::from_matrix(e);
            match cfg.max_rows {
                Some(cap) => stride_subset(&rows, cap),
                None => rows,
            }
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|a| (a + 1..r).map(move |b| (a, b))).collect();
    let results: Vec<(f64, f64, Option<f64>)> = pairs
        .par_iter()
        .map(|&(a, b)| -> Result<(f64, f64, Option<f64>)> {
            let x = &rows[a];
            let mut y = rows[b].clone();
            if x.n() < 2 || y.n() < 2 {
                return Err(Error::invalid(format!(
                    "subgraphs {a} and {b} need at least two vertices each"
                )));
            }
            if cfg.align {
                let w = align_point_clouds(&x.to_matrix(), &y.to_matrix())?;
                y = apply(&y, &w);
            }
            let sigma = match cfg.kernel.bandwidth {
                Bandwidth::Median => median_distance(x, &y),
                Bandwidth::Fixed(_) => cfg.kernel.resolve(&x.to_matrix(), &y.to_matrix())?,
            };
            let pair_stream = stream.derive_index((a * r + b) as u64);
            let t = match cfg.mode {
                TestMode::Exact => unbiased(x, &y, sigma),
                TestMode::Linear => linear(x, &y, sigma, &mut pair_stream.derive("statistic").rng())?,
            };
            let p = if cfg.bootstrap > 0 {
                Some(permutation_test(x, &y, sigma, cfg.mode, cfg.bootstrap, pair_stream)?.p_value)
            } else {
                None
            };
            Ok((t, sigma, p))
        })
        .collect::<Result<_>>()?;
    let mut s_hat = DMatrix::zeros(r, r);
    let mut sigmas = DMatrix::zeros(r, r);
    let mut p_values = (cfg.bootstrap > 0).then(|| DMatrix::from_element(r, r, 1.0));
    for (&(a, b), (t, s, p)) in pairs.iter().zip(results) {
        s_hat[(a, b)] = t;
        s_hat[(b, a)] = t;
        sigmas[(a, b)] = s;
        sigmas[(b, a)] = s;
        if let (Some(pv), Some(p)) = (p_values.as_mut(), p) {
            pv[(a, b)] = p;
            pv[(b, a)] = p;
        }
    }
    Ok(DissimilarityMatrix {
        s_hat,
        p_values,
        subgraph_sizes: embeddings.iter().map(|e| e.nrows()).collect(),
        sigmas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Complete,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotifSource {
    #[default]
    Statistic,
    /// Uses `1 - p` as the dissimilarity.
    PValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotifCut {
    /// Stop merging at this many motifs.
    Count(usize),
    /// Apply every merge whose height is at most this value.
    Height(f64),
}

/// One agglomeration step. Ids below `R` are subgraphs; merge `k` creates
/// id `R + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifAssignment {
    /// Motif of each subgraph, numbered by first appearance.
    pub motif_label: Vec<usize>,
    pub n_motifs: usize,
    pub dendrogram: Vec<Merge>,
}

impl MotifAssignment {
    /// Subgraph indices per motif, in increasing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_motifs];
        for (s, &m) in self.motif_label.iter().enumerate() {
            out[m].push(s);
        }
        out
    }
}

/// Full agglomerative dendrogram of a symmetric dissimilarity matrix.
pub fn agglomerate(d: &DMatrix<f64>, linkage: Linkage) -> Result<Vec<Merge>> {
    let r = d.nrows();
    if d.ncols() != r {
        return Err(Error::DimensionMismatch(d.nrows(), d.ncols()));
    }
    for a in 0..r {
        for b in 0..a {
            if (d[(a, b)] - d[(b, a)]).abs() > 1e-12 || d[(a, b)].is_nan() {
                return Err(Error::invalid(format!("dissimilarity is not symmetric at ({a}, {b})")));
            }
        }
    }
    let mut dist = d.clone();
    let mut active: Vec<usize> = (0..r).collect();
    let mut id: Vec<usize> = (0..r).collect();
    let mut size = vec![1usize; r];
    let mut merges = Vec::with_capacity(r.saturating_sub(1));
    while active.len() > 1 {
        let mut best = (0, 0, f64::INFINITY);
        for (ia, &a) in active.iter().enumerate() {
            for &b in &active[ia + 1..] {
                if dist[(a, b)] < best.2 {
                    best = (a, b, dist[(a, b)]);
                }
            }
        }
        let (a, b, h) = best;
        let (lo, hi) = if id[a] < id[b] { (id[a], id[b]) } else { (id[b], id[a]) };
        let merged = size[a] + size[b];
        merges.push(Merge {
            left: lo,
            right: hi,
            height: h,
            size: merged,
        });
        for &c in &active {
            if c == a || c == b {
                continue;
            }
            let v = match linkage {
                Linkage::Single => dist[(a, c)].min(dist[(b, c)]),
                Linkage::Complete => dist[(a, c)].max(dist[(b, c)]),
                Linkage::Average => {
                    (size[a] as f64 * dist[(a, c)] + size[b] as f64 * dist[(b, c)]) / merged as f64
                }
            };
            dist[(a, c)] = v;
            dist[(c, a)] = v;
        }
        size[a] = merged;
        id[a] = r + merges.len() - 1;
        active.retain(|&c| c != b);
    }
    Ok(merges)
}

/// Groups subgraphs into motifs by agglomerative clustering.
pub fn cluster_motifs(
    s: &DissimilarityMatrix,
    source: MotifSource,
    linkage: Linkage,
    cut: MotifCut,
) -> Result<MotifAssignment> {
    let d = match source {
        MotifSource::Statistic => s.s_hat.clone(),
        MotifSource::PValue => {
            let p = s
                .p_values
                .as_ref()
                .ok_or_else(|| Error::invalid("p-value clustering needs permutation replicates"))?;
            p.map(|v| 1.0 - v)
        }
    };
    let mut d = d;
    d.fill_diagonal(0.0);
    cluster_dissimilarity(&d, linkage, cut)
}

/// As [`cluster_motifs`] for a plain matrix.
pub fn cluster_dissimilarity(d: &DMatrix<f64>, linkage: Linkage, cut: MotifCut) -> Result<MotifAssignment> {
    let r = d.nrows();
    if r == 0 {
        return Err(Error::EmptyInput("no subgraphs to cluster".into()));
    }
    let dendrogram = agglomerate(d, linkage)?;
    let applied = match cut {
        MotifCut::Count(m) => {
            if m == 0 || m > r {
                return Err(Error::invalid(format!("cannot cut {r} subgraphs into {m} motifs")));
            }
            r - m
        }
        MotifCut::Height(h) => dendrogram.iter().take_while(|m| m.height <= h).count(),
    };
    // union-find over merge ids
    let mut parent: Vec<usize> = (0..r + applied).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (k, m) in dendrogram.iter().take(applied).enumerate() {
        let new = r + k;
        let (a, b) = (find(&mut parent, m.left), find(&mut parent, m.right));
        parent[a] = new;
        parent[b] = new;
    }
    let roots: Vec<usize> = (0..r).map(|s| find(&mut parent, s)).collect();
    let part = crate::graph::VertexPartition::from_raw_labels(&roots);
    Ok(MotifAssignment {
        motif_label: part.labels().to_vec(),
        n_motifs: part.n_clusters(),
        dendrogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_pairs_give_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.3, 0.1]);
        assert_eq!(mmd_statistic(&a, &a, &KernelConfig::fixed(1.0)).unwrap(), 0.0);
        assert_eq!(mmd_statistic(&a, &a, &KernelConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn two_point_closed_form() {
        let t: f64 = 0.8;
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        let y = DMatrix::from_row_slice(2, 1, &[t, t]);
        let v = mmd_statistic(&x, &y, &KernelConfig::fixed(1.0)).unwrap();
        assert!((v - (2.0 - 2.0 * (-t * t).exp())).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let a = DMatrix::zeros(3, 2);
        let b = DMatrix::zeros(3, 3);
        assert!(mmd_statistic(&a, &b, &KernelConfig::fixed(1.0)).is_err());
        let one = DMatrix::zeros(1, 2);
        assert!(mmd_statistic(&a, &one, &KernelConfig::fixed(1.0)).is_err());
        assert!(mmd_statistic(&a, &a, &KernelConfig::fixed(0.0)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mmd_linear(&a, &a, &KernelConfig::fixed(1.0), &mut rng).is_err());
    }

    #[test]
    fn linear_constant_sample_is_zero() {
        let a = DMatrix::from_element(10, 2, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mmd_linear(&a, &a, &KernelConfig::fixed(1.0), &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn kernel_cache_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = Rows::from_vec((0..40).map(|_| rng.random::<f64>()).collect(), 20, 2).unwrap();
        let cache = KernelCache::new(&z, 0.7);
        let mut idx: Vec<usize> = (0..20).collect();
        idx.shuffle(&mut rng);
        let (a, b) = idx.split_at(8);
        let direct = unbiased(&z.subset(a), &z.subset(b), 0.7);
        assert!((cache.statistic(a) - direct).abs() < 1e-12);
    }

    #[test]
    fn alignment_undoes_rotation_of_clusters() {
        let centers = [[1.0, 0.2, 0.0], [0.1, 0.8, 0.3], [0.0, 0.2, 0.6]];
        let x = DMatrix::from_fn(90, 3, |i, j| centers[i % 3][j]);
        let q = nalgebra::Rotation3::from_euler_angles(0.4, -0.3, 1.1).matrix().clone_owned();
        let q = DMatrix::from_fn(3, 3, |i, j| q[(i, j)]);
        let y = &x * &q;
        let w = align_point_clouds(&x, &y).unwrap();
        let back = &y * &w;
        let err = (&back - &x).abs().max();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn ideal_blocks_cluster_exactly() {
        let motif = [0, 0, 1, 1, 1, 2, 2, 0];
        let d = DMatrix::from_fn(8, 8, |a, b| if motif[a] == motif[b] { 0.0 } else { 1.0 });
        for linkage in [Linkage::Average, Linkage::Complete, Linkage::Single] {
            let m = cluster_dissimilarity(&d, linkage, MotifCut::Count(3)).unwrap();
            assert_eq!(m.motif_label, vec![0, 0, 1, 1, 1, 2, 2, 0]);
            assert_eq!(m.dendrogram.len(), 7);
            let h = cluster_dissimilarity(&d, linkage, MotifCut::Height(0.5)).unwrap();
            assert_eq!(h.motif_label, m.motif_label);
        }
    }

    #[test]
    fn single_subgraph_single_motif() {
        let d = DMatrix::zeros(1, 1);
        let m = cluster_dissimilarity(&d, Linkage::Average, MotifCut::Count(1)).unwrap();
        assert_eq!(m.motif_label, vec![0]);
        assert!(m.dendrogram.is_empty());
    }

    #[test]
    fn average_linkage_heights() {
        // points on a line at 0, 1, 5
        let p = [0.0f64, 1.0, 5.0];
        let d = DMatrix::from_fn(3, 3, |a, b| (p[a] - p[b]).abs());
        let m = agglomerate(&d, Linkage::Average).unwrap();
        assert_eq!((m[0].left, m[0].right, m[0].height), (0, 1, 1.0));
        assert_eq!((m[1].left, m[1].right, m[1].height, m[1].size), (2, 3, 4.5, 3));
        let c = agglomerate(&d, Linkage::Complete).unwrap();
        assert_eq!(c[1].height, 5.0);
        let s = agglomerate(&d, Linkage::Single).unwrap();
        assert_eq!(s[1].height, 4.0);
    }
}
