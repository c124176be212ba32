//! Hierarchical stochastic blockmodels as random dot product graphs.
//!
//! A model is a tree. Leaves are positive semidefinite blockmodels; internal
//! nodes group their children into mutually weakly connected subgraphs.
//! Every internal node owns one latent coordinate shared by all of its
//! vertices with value `sqrt(cross_p)`, and every leaf owns a disjoint set
//! of coordinates holding rows of `(B - o J)^{1/2}`, where `o` is the sum of
//! `cross_p` over the leaf's ancestors. Consequently:
//!
//! * two vertices of the same leaf connect with probability exactly `B`;
//! * two vertices whose lowest common ancestor is `v` connect with
//!   probability exactly the sum of `cross_p` over `v` and its ancestors.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, NodePath, Result};
use crate::graph::{SparseGraph, VertexPartition};
use crate::linalg::psd_sqrt;

const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeMode {
    /// Vertex counts drawn multinomially from the mixture weights.
    #[default]
    Multinomial,
    /// Explicit `sizes` where given, otherwise `n * pi` rounded by largest
    /// remainder.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HsbmNode {
    Leaf {
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
        pi: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sizes: Option<Vec<usize>>,
    },
    Internal {
        children: Vec<HsbmNode>,
        pi: Vec<f64>,
        cross_p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sizes: Option<Vec<usize>>,
    },
}

fn default_rho() -> f64 {
    1.0
}

/// Complete model description, serialisable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsbmSpec {
    pub n: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub size_mode: SizeMode,
    pub root: HsbmNode,
}

impl HsbmNode {
    pub fn leaf(b: Vec<Vec<f64>>, pi: Vec<f64>) -> Self {
        HsbmNode::Leaf { b, pi, sizes: None }
    }

    pub fn internal(children: Vec<HsbmNode>, pi: Vec<f64>, cross_p: f64) -> Self {
        HsbmNode::Internal {
            children,
            pi,
            cross_p,
            sizes: None,
        }
    }

    pub fn with_sizes(mut self, s: Vec<usize>) -> Self {
        match &mut self {
            HsbmNode::Leaf { sizes, .. } | HsbmNode::Internal { sizes, .. } => *sizes = Some(s),
        }
        self
    }

    fn pi(&self) -> &[f64] {
        match self {
            HsbmNode::Leaf { pi, .. } | HsbmNode::Internal { pi, .. } => pi,
        }
    }

    fn sizes(&self) -> Option<&[usize]> {
        match self {
            HsbmNode::Leaf { sizes, .. } | HsbmNode::Internal { sizes, .. } => sizes.as_deref(),
        }
    }

    /// Height of the tree below this node (a leaf has depth 0).
    pub fn depth(&self) -> usize {
        match self {
            HsbmNode::Leaf { .. } => 0,
            HsbmNode::Internal { children, .. } => {
                1 + children.iter().map(HsbmNode::depth).max().unwrap_or(0)
            }
        }
    }
}

/// Structural checks that need no linear algebra.
pub fn validate_structure(spec: &HsbmSpec) -> Result<()> {
    if spec.n == 0 {
        return Err(Error::InvalidSpec {
            path: NodePath::root(),
            message: "n must be positive".into(),
        });
    }
    if !(spec.rho > 0.0 && spec.rho <= 1.0) {
        return Err(Error::InvalidSpec {
            path: NodePath::root(),
            message: format!("rho = {} must lie in (0, 1]", spec.rho),
        });
    }
    validate_node(&spec.root, &NodePath::root())
}

fn validate_node(node: &HsbmNode, path: &NodePath) -> Result<()> {
    let bad = |message: String| Error::InvalidSpec {
        path: path.clone(),
        message,
    };
    let pi = node.pi();
    if pi.is_empty() {
        return Err(bad("empty mixture weights".into()));
    }
    if pi.iter().any(|&w| w.is_nan() || w <= 0.0) {
        return Err(bad(format!("mixture weights must be strictly positive: {pi:?}")));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(bad(format!("mixture weights sum to {total}, not 1")));
    }
    if let Some(s) = node.sizes() {
        if s.len() != pi.len() {
            return Err(bad(format!("{} sizes for {} components", s.len(), pi.len())));
        }
    }
    match node {
        HsbmNode::Leaf { b, .. } => {
            let k = pi.len();
            if b.len() != k || b.iter().any(|r| r.len() != k) {
                return Err(bad(format!("B must be {k} x {k}")));
            }
            for i in 0..k {
                for j in 0..k {
                    let v = b[i][j];
                    if !(0.0..=1.0).contains(&v) {
                        return Err(bad(format!("B[{i}][{j}] = {v} outside [0, 1]")));
                    }
                    if (v - b[j][i]).abs() > 1e-12 {
                        return Err(bad(format!("B is not symmetric at ({i}, {j})")));
                    }
                }
            }
            let m = DMatrix::from_fn(k, k, |i, j| b[i][j]);
            psd_sqrt(&m).map_err(|eigenvalue| Error::NotPositiveSemidefinite {
                path: path.clone(),
                eigenvalue,
            })?;
        }
        HsbmNode::Internal {
            children, cross_p, ..
        } => {
            if children.len() != pi.len() {
                return Err(bad(format!(
                    "{} children but {} mixture weights",
                    children.len(),
                    pi.len()
                )));
            }
            if !(0.0..=1.0).contains(cross_p) {
                return Err(bad(format!("cross_p = {cross_p} outside [0, 1]")));
            }
            for (i, c) in children.iter().enumerate() {
                validate_node(c, &path.child(i))?;
            }
        }
    }
    Ok(())
}

/// One lowest-level block of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    /// Child indices from the root down to the owning leaf.
    pub path: NodePath,
    /// Block index inside the leaf.
    pub local: usize,
    /// Product of the mixture weights along the path.
    pub weight: f64,
}

/// Latent coordinates of every vertex plus the true hierarchy labels.
#[derive(Debug, Clone)]
pub struct LatentPositions {
    /// `n x D` latent vectors.
    pub x: DMatrix<f64>,
    /// Global index into `blocks` for each vertex.
    pub block_label: Vec<usize>,
    pub blocks: Vec<BlockInfo>,
    /// `n_blocks x D` distinct latent vectors.
    pub block_latent: DMatrix<f64>,
}

impl LatentPositions {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Child indices from the root to the vertex's leaf.
    pub fn subgraph_path(&self, v: usize) -> &[usize] {
        &self.blocks[self.block_label[v]].path.0
    }

    /// Partition induced by the first `depth` path entries (depth 1 gives
    /// the top-level subgraphs). Labels follow first appearance.
    pub fn labels_at_depth(&self, depth: usize) -> VertexPartition {
        let keys: Vec<Vec<usize>> = (0..self.n())
            .map(|v| {
                let p = self.subgraph_path(v);
                p[..depth.min(p.len())].to_vec()
            })
            .collect();
        VertexPartition::from_raw_labels(&keys)
    }

    /// Partition into lowest-level blocks.
    pub fn block_partition(&self) -> VertexPartition {
        VertexPartition::from_raw_labels(&self.block_label)
    }

    /// Gram matrix of the distinct block latent vectors.
    pub fn block_gram(&self) -> DMatrix<f64> {
        &self.block_latent * self.block_latent.transpose()
    }
}

struct Layout {
    dim: usize,
    blocks: Vec<BlockInfo>,
    /// Per block: (coordinate, value) pairs.
    coords: Vec<Vec<(usize, f64)>>,
}

fn build_layout(spec: &HsbmSpec) -> Result<Layout> {
    let mut layout = Layout {
        dim: 0,
        blocks: Vec::new(),
        coords: Vec::new(),
    };
    walk_layout(&spec.root, &NodePath::root(), 1.0, 0.0, &[], &mut layout)?;
    Ok(layout)
}

fn walk_layout(
    node: &HsbmNode,
    path: &NodePath,
    weight: f64,
    offset: f64,
    shared: &[(usize, f64)],
    out: &mut Layout,
) -> Result<()> {
    match node {
        HsbmNode::Leaf { b, pi, .. } => {
            let k = pi.len();
            let adjusted = DMatrix::from_fn(k, k, |i, j| b[i][j] - offset);
            let root = psd_sqrt(&adjusted).map_err(|eigenvalue| Error::NotPositiveSemidefinite {
                path: path.clone(),
                eigenvalue,
            })?;
            let base = out.dim;
            out.dim += k;
            for (local, &w) in pi.iter().enumerate() {
                let mut c = shared.to_vec();
                c.extend((0..k).map(|j| (base + j, root[(local, j)])));
                out.coords.push(c);
                out.blocks.push(BlockInfo {
                    path: path.clone(),
                    local,
                    weight: weight * w,
                });
            }
        }
        HsbmNode::Internal {
            children,
            pi,
            cross_p,
            ..
        } => {
            let slot = out.dim;
            out.dim += 1;
            let mut s = shared.to_vec();
            s.push((slot, cross_p.sqrt()));
            for (i, (c, &w)) in children.iter().zip(pi).enumerate() {
                walk_layout(c, &path.child(i), weight * w, offset + cross_p, &s, out)?;
            }
        }
    }
    Ok(())
}

/// Affinity summary for one internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityLevel {
    pub path: NodePath,
    /// Smallest latent dot product between two vertices of the same child.
    pub q: f64,
    /// Largest latent dot product between vertices of different children.
    pub p: f64,
    pub satisfied: bool,
}

/// Connection probability between two blocks as the construction realises
/// it (before any sparsity factor).
fn block_pair_probability(root: &HsbmNode, a: &BlockInfo, b: &BlockInfo) -> f64 {
    let mut node = root;
    let mut acc = 0.0;
    let common = a
        .path
        .0
        .iter()
        .zip(&b.path.0)
        .take_while(|(x, y)| x == y)
        .count();
    for depth in 0..=common {
        match node {
            HsbmNode::Leaf { b: bm, .. } => return bm[a.local][b.local],
            HsbmNode::Internal {
                children, cross_p, ..
            } => {
                acc += cross_p;
                if depth == common {
                    return acc;
                }
                node = &children[a.path.0[depth]];
            }
        }
    }
    acc
}

fn collect_blocks(node: &HsbmNode, path: &NodePath, weight: f64, out: &mut Vec<BlockInfo>) {
    match node {
        HsbmNode::Leaf { pi, .. } => {
            for (local, w) in pi.iter().enumerate() {
                out.push(BlockInfo {
                    path: path.clone(),
                    local,
                    weight: weight * w,
                });
            }
        }
        HsbmNode::Internal { children, pi, .. } => {
            for (i, (c, w)) in children.iter().zip(pi).enumerate() {
                collect_blocks(c, &path.child(i), weight * w, out);
            }
        }
    }
}

/// Exact `(q, p)` at every internal node, from the block-level latent Gram
/// matrix the construction produces. A model with a single leaf yields an
/// empty report.
pub fn validate_affinity(spec: &HsbmSpec) -> Result<Vec<AffinityLevel>> {
    validate_structure(spec)?;
    let mut blocks = Vec::new();
    collect_blocks(&spec.root, &NodePath::root(), 1.0, &mut blocks);
    let gram = DMatrix::from_fn(blocks.len(), blocks.len(), |i, j| {
        block_pair_probability(&spec.root, &blocks[i], &blocks[j])
    });
    Ok(affinity_from_gram(&spec.root, &blocks, &gram))
}

fn affinity_from_gram(root: &HsbmNode, blocks: &[BlockInfo], gram: &DMatrix<f64>) -> Vec<AffinityLevel> {
    let mut internal = Vec::new();
    internal_paths(root, &NodePath::root(), &mut internal);
    internal
        .into_iter()
        .map(|path| {
            let d = path.depth();
            let under: Vec<usize> = (0..blocks.len())
                .filter(|&i| blocks[i].path.0.starts_with(&path.0))
                .collect();
            let mut q = f64::INFINITY;
            let mut p = f64::NEG_INFINITY;
            for &i in &under {
                for &j in &under {
                    let same_child = blocks[i].path.0[d] == blocks[j].path.0[d];
                    let g = gram[(i, j)];
                    if same_child {
                        q = q.min(g);
                    } else {
                        p = p.max(g);
                    }
                }
            }
            AffinityLevel {
                satisfied: p < q,
                path,
                q,
                p,
            }
        })
        .collect()
}

fn internal_paths(node: &HsbmNode, path: &NodePath, out: &mut Vec<NodePath>) {
    if let HsbmNode::Internal { children, .. } = node {
        out.push(path.clone());
        for (i, c) in children.iter().enumerate() {
            internal_paths(c, &path.child(i), out);
        }
    }
}

/// Second moment `E[X X^T]` of the latent distribution, as a diagnostic.
pub fn second_moment(spec: &HsbmSpec) -> Result<DMatrix<f64>> {
    validate_structure(spec)?;
    let layout = build_layout(spec)?;
    let mut m = DMatrix::zeros(layout.dim, layout.dim);
    for (b, coords) in layout.blocks.iter().zip(&layout.coords) {
        for &(i, a) in coords {
            for &(j, c) in coords {
                m[(i, j)] += b.weight * a * c;
            }
        }
    }
    Ok(m)
}

fn largest_remainder(count: usize, pi: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = pi.iter().map(|w| w * count as f64).collect();
    let mut out: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = count.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..pi.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

fn multinomial<R: Rng + ?Sized>(count: usize, pi: &[f64], rng: &mut R) -> Vec<usize> {
    let mut out = vec![0; pi.len()];
    for _ in 0..count {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = pi.len() - 1;
        for (i, w) in pi.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        out[pick] += 1;
    }
    out
}

fn allocate<R: Rng + ?Sized>(
    node: &HsbmNode,
    path: &NodePath,
    count: usize,
    mode: SizeMode,
    rng: &mut R,
    out: &mut Vec<usize>,
) -> Result<()> {
    let counts = match node.sizes() {
        Some(s) => {
            let total: usize = s.iter().sum();
            if total != count {
                return Err(Error::InvalidSpec {
                    path: path.clone(),
                    message: format!("sizes sum to {total} but {count} vertices were allocated here"),
                });
            }
            s.to_vec()
        }
        None => match mode {
            SizeMode::Fixed => largest_remainder(count, node.pi()),
            SizeMode::Multinomial => multinomial(count, node.pi(), rng),
        },
    };
    match node {
        HsbmNode::Leaf { .. } => out.extend(counts),
        HsbmNode::Internal { children, .. } => {
            for (i, (c, &k)) in children.iter().zip(&counts).enumerate() {
                allocate(c, &path.child(i), k, mode, rng, out)?;
            }
        }
    }
    Ok(())
}

/// Draws vertex counts per block and lays out the latent vectors. Vertices
/// are ordered block by block in tree order.
pub fn build_latent_positions<R: Rng + ?Sized>(spec: &HsbmSpec, rng: &mut R) -> Result<LatentPositions> {
    validate_structure(spec)?;
    let layout = build_layout(spec)?;
    let nb = layout.blocks.len();
    let mut block_latent = DMatrix::zeros(nb, layout.dim);
    for (b, coords) in layout.coords.iter().enumerate() {
        for &(c, v) in coords {
            block_latent[(b, c)] = v;
        }
    }
    let gram = &block_latent * block_latent.transpose();
    for level in affinity_from_gram(&spec.root, &layout.blocks, &gram) {
        if !level.satisfied {
            return Err(Error::AffinityViolated {
                path: level.path,
                p: level.p,
                q: level.q,
            });
        }
    }
    if let Some(max) = gram.iter().copied().reduce(f64::max) {
        if max > 1.0 + 1e-12 || gram.iter().any(|&g| g < -1e-12) {
            return Err(Error::ProbabilityOutOfRange(max));
        }
    }

    let mut counts = Vec::with_capacity(nb);
    allocate(&spec.root, &NodePath::root(), spec.n, spec.size_mode, rng, &mut counts)?;
    let mut block_label = Vec::with_capacity(spec.n);
    for (b, &c) in counts.iter().enumerate() {
        block_label.extend(std::iter::repeat_n(b, c));
    }
    let x = DMatrix::from_fn(spec.n, layout.dim, |i, j| block_latent[(block_label[i], j)]);
    Ok(LatentPositions {
        x,
        block_label,
        blocks: layout.blocks,
        block_latent,
    })
}

/// Independent Bernoulli edges with probability `rho * <x_i, x_j>` for any
/// latent matrix. Each row draws from its own stream seeded from `rng`, so
/// the result does not depend on the thread count.
pub fn sample_rdpg_matrix<R: Rng + ?Sized>(x: &DMatrix<f64>, rho: f64, rng: &mut R) -> Result<SparseGraph> {
    let rows = crate::linalg::Rows::from_matrix(x);
    sample_with(x.nrows(), rng, |i, j| rho * crate::linalg::dot(rows.row(i), rows.row(j)))
}

/// Samples a graph from latent positions with sparsity factor `rho`.
pub fn sample_rdpg<R: Rng + ?Sized>(latent: &LatentPositions, rho: f64, rng: &mut R) -> Result<SparseGraph> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::invalid(format!("rho = {rho} must lie in (0, 1]")));
    }
    let gram = latent.block_gram();
    let labels = &latent.block_label;
    sample_with(latent.n(), rng, |i, j| rho * gram[(labels[i], labels[j])])
}

fn sample_with<R, F>(n: usize, rng: &mut R, prob: F) -> Result<SparseGraph>
where
    R: Rng + ?Sized,
    F: Fn(usize, usize) -> f64 + Sync,
{
    let base: u64 = rng.random();
    let upper: Vec<Result<Vec<u32>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(base ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut row = Vec::new();
            for j in i + 1..n {
                let mut p = prob(i, j);
                if !(-1e-12..=1.0 + 1e-12).contains(&p) {
                    return Err(Error::ProbabilityOutOfRange(p));
                }
                p = p.clamp(0.0, 1.0);
                if r.random::<f64>() < p {
                    row.push(j as u32);
                }
            }
            Ok(row)
        })
        .collect();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, row) in upper.into_iter().enumerate() {
        for j in row? {
            adj[i].push(j);
            adj[j as usize].push(i as u32);
        }
    }
    let ids = (0..n).map(|i| i.to_string()).collect();
    Ok(SparseGraph::from_adjacency_lists(ids, adj))
}

/// Builds latent positions and samples a graph from them.
pub fn sample_hsbm<R: Rng + ?Sized>(spec: &HsbmSpec, rng: &mut R) -> Result<(SparseGraph, LatentPositions)> {
    let latent = build_latent_positions(spec, rng)?;
    let g = sample_rdpg(&latent, spec.rho, rng)?;
    Ok((g, latent))
}

/// Block probability matrices of the synthetic two-level example with
/// 4100 vertices, eight subgraphs and three motifs.
pub mod example {
    use super::*;

    pub fn b1() -> Vec<Vec<f64>> {
        vec![vec![0.3, 0.25, 0.25], vec![0.25, 0.3, 0.25], vec![0.25, 0.25, 0.7]]
    }

    pub fn b2() -> Vec<Vec<f64>> {
        vec![vec![0.4, 0.25, 0.25], vec![0.25, 0.4, 0.25], vec![0.25, 0.25, 0.4]]
    }

    pub fn b3() -> Vec<Vec<f64>> {
        vec![vec![0.25, 0.2, 0.2], vec![0.2, 0.8, 0.2], vec![0.2, 0.2, 0.25]]
    }

    /// Subgraph sizes in order.
    pub const SIZES: [usize; 8] = [300, 600, 600, 600, 700, 600, 300, 400];

    /// Motif (0 = B1, 1 = B2, 2 = B3) of each of the eight subgraphs:
    /// subgraphs {3, 7} use B1, {1, 2, 8} use B2, {4, 5, 6} use B3
    /// (one-based).
    pub const MOTIF_OF_SUBGRAPH: [usize; 8] = [1, 1, 0, 2, 2, 2, 0, 1];

    pub fn spec_with_cross(cross_p: f64) -> HsbmSpec {
        let third = vec![1.0 / 3.0; 3];
        let children = MOTIF_OF_SUBGRAPH
            .iter()
            .map(|&m| {
                let b = match m {
                    0 => b1(),
                    1 => b2(),
                    _ => b3(),
                };
                HsbmNode::leaf(b, third.clone())
            })
            .collect();
        let n: usize = SIZES.iter().sum();
        let pi = SIZES.iter().map(|&s| s as f64 / n as f64).collect();
        HsbmSpec {
            n,
            rho: 1.0,
            size_mode: SizeMode::Fixed,
            root: HsbmNode::internal(children, pi, cross_p).with_sizes(SIZES.to_vec()),
        }
    }

    pub fn spec() -> HsbmSpec {
        spec_with_cross(0.01)
    }
}
