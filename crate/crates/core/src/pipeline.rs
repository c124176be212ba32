//! The recursive detect / embed / cluster / test procedure.
//!
//! Each node of the output tree is one subgraph. A node that is large
//! enough is embedded, split into subgraphs by seeded subspace clustering,
//! its children are re-embedded and compared pairwise, and the children
//! are grouped into motifs. Only the largest child of each motif is
//! processed further; the other members of the motif record which child
//! stands in for them.

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cluster::{estimate_num_subgraphs, seeded_subspace_cluster, SeedSet, SubgraphCountEstimate};
use crate::elbow::ElbowChoice;
use crate::embed::{ase, choose_dimension, project_to_sphere, scree, Embedding};
use crate::error::{Error, NodePath, Result};
use crate::graph::{block_density, induced_subgraph, BlockDensity, SparseGraph, VertexPartition};
use crate::motif::{
    cluster_motifs, dissimilarity_matrix, DissimilarityMatrix, Linkage, MotifAssignment, MotifCut,
    MotifSource, MotifTestConfig,
};
use crate::rng::SeedStream;

/// A count that is either given or estimated from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Choice {
    #[default]
    Auto,
    Fixed(usize),
}

impl Choice {
    pub fn fixed(self) -> Option<usize> {
        match self {
            Choice::Auto => None,
            Choice::Fixed(v) => Some(v),
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::Auto => f.write_str("auto"),
            Choice::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Choice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Choice::Auto);
        }
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(Choice::Fixed(v)),
            _ => Err(Error::invalid(format!("expected a positive integer or \"auto\", got {s:?}"))),
        }
    }
}

impl Serialize for Choice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Choice::Auto => s.serialize_str("auto"),
            Choice::Fixed(v) => s.serialize_u64(*v as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Choice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(0) => Err(serde::de::Error::custom("counts must be positive")),
            Raw::N(v) => Ok(Choice::Fixed(v)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Embedding dimension at the root.
    #[serde(rename = "D")]
    pub top_dim: Choice,
    /// Embedding dimension below the root and for comparing children.
    pub d: Choice,
    /// Number of subgraphs per split.
    #[serde(rename = "R")]
    pub n_subgraphs: Choice,
    /// Subgraphs with at most this many vertices are not split. Defaults to
    /// `100 d` (with `d = 3` when `d` is automatic).
    pub min_cluster_size: Option<usize>,
    pub max_depth: usize,
    pub motif_test: MotifTestConfig,
    pub motif_source: MotifSource,
    pub linkage: Linkage,
    /// Motif cut. When absent, p-value clustering cuts at `1 - p <= 0.95`
    /// and statistic clustering cuts at the largest gap between
    /// consecutive merge heights.
    pub motif_cut: Option<MotifCut>,
    /// Project embeddings onto the unit sphere before clustering.
    pub sphere: bool,
    /// Longest scree curve used for automatic dimensions.
    pub max_auto_dim: usize,
    pub elbow: ElbowChoice,
    /// Monte Carlo repetitions per candidate when estimating `R`.
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            top_dim: Choice::Auto,
            d: Choice::Auto,
            n_subgraphs: Choice::Auto,
            min_cluster_size: None,
            max_depth: 3,
            motif_test: MotifTestConfig::default(),
            motif_source: MotifSource::Statistic,
            linkage: Linkage::Average,
            motif_cut: None,
            sphere: false,
            max_auto_dim: 30,
            elbow: ElbowChoice::First,
            n_mc: 5,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn min_cluster_size(&self) -> usize {
        self.min_cluster_size
            .unwrap_or(100 * self.d.fixed().unwrap_or(3))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.d.fixed() {
            if self.min_cluster_size() < 2 * d {
                return Err(Error::invalid(format!(
                    "min_cluster_size {} is below 2 d = {}",
                    self.min_cluster_size(),
                    2 * d
                )));
            }
        }
        if self.max_auto_dim < 2 {
            return Err(Error::invalid("max_auto_dim must be at least 2"));
        }
        if self.n_mc == 0 {
            return Err(Error::invalid("n_mc must be positive"));
        }
        if matches!(self.motif_cut, Some(MotifCut::Count(0))) {
            return Err(Error::invalid("motif count must be positive"));
        }
        if self.motif_source == MotifSource::PValue && self.motif_test.bootstrap == 0 {
            return Err(Error::invalid("p-value motif clustering needs bootstrap replicates"));
        }
        Ok(())
    }
}

/// Why a node was not split further.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeStatus {
    Split,
    /// At most `min_cluster_size` vertices.
    Small,
    MaxDepth,
    /// A member of a motif whose representative is the sibling with this
    /// child index.
    Represented { by: usize },
    /// Only one subgraph was found.
    Unsplit,
    Degenerate { message: String },
}

/// Block probability and weight estimates for a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEstimate {
    pub p_hat: BlockDensity,
    pub pi_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub path: NodePath,
    pub depth: usize,
    /// Vertex indices into the graph handed to [`detect_hierarchy`].
    pub vertices: Vec<usize>,
    pub status: NodeStatus,
    /// Dimension this node's own embedding used, if it was embedded.
    pub embedding_dim: Option<usize>,
    pub eigenvalues: Vec<f64>,
    /// Scree magnitudes when the dimension was chosen automatically.
    pub scree: Vec<f64>,
    pub phi: Option<SubgraphCountEstimate>,
    pub seeds: Option<Vec<usize>>,
    /// Dimension children were re-embedded into for comparison.
    pub child_dim: Option<usize>,
    pub dissimilarity: Option<DissimilarityMatrix>,
    /// Children compared in `dissimilarity` (children too small to embed
    /// are left out).
    pub tested_children: Vec<usize>,
    /// Motif labels over `tested_children`.
    pub motifs: Option<MotifAssignment>,
    /// Child index of each motif's representative.
    pub representatives: Vec<usize>,
    /// Densities between children.
    pub blocks: Option<BlockEstimate>,
    pub children: Vec<HierarchyNode>,
}

impl HierarchyNode {
    fn terminal(path: NodePath, vertices: Vec<usize>, status: NodeStatus) -> Self {
        HierarchyNode {
            depth: path.depth(),
            path,
            vertices,
            status,
            embedding_dim: None,
            eigenvalues: Vec::new(),
            scree: Vec::new(),
            phi: None,
            seeds: None,
            child_dim: None,
            dissimilarity: None,
            tested_children: Vec::new(),
            motifs: None,
            representatives: Vec::new(),
            blocks: None,
            children: Vec::new(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.status, NodeStatus::Degenerate { .. })
    }

    /// Depth of the deepest descendant.
    pub fn height(&self) -> usize {
        self.children.iter().map(|c| c.height() + 1).max().unwrap_or(0)
    }

    /// Every node in depth-first order.
    pub fn walk(&self) -> Vec<&HierarchyNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    /// Partition of this node's vertices by child (positions refer to
    /// `self.vertices`).
    pub fn child_partition(&self) -> Option<VertexPartition> {
        if self.children.is_empty() {
            return None;
        }
        let pos: std::collections::HashMap<usize, usize> =
            self.vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut labels = vec![0; self.vertices.len()];
        for (c, child) in self.children.iter().enumerate() {
            for v in &child.vertices {
                labels[pos[v]] = c;
            }
        }
        VertexPartition::new(labels, self.children.len()).ok()
    }

    /// Motif of child `c`, when it took part in the comparison.
    pub fn motif_of_child(&self, c: usize) -> Option<usize> {
        let m = self.motifs.as_ref()?;
        let t = self.tested_children.iter().position(|&x| x == c)?;
        Some(m.motif_label[t])
    }
}

/// One child per motif: the largest, ties to the lower index.
pub fn representative_subgraph(child_sizes: &[usize], motifs: &MotifAssignment) -> Vec<usize> {
    motifs
        .members()
        .iter()
        .map(|members| {
            *members
                .iter()
                .max_by(|&&a, &&b| child_sizes[a].cmp(&child_sizes[b]).then(b.cmp(&a)))
                .expect("motifs are nonempty")
        })
        .collect()
}

pub fn estimate_block_matrix(g: &SparseGraph, part: &VertexPartition) -> Result<BlockEstimate> {
    let p_hat = block_density(g, part)?;
    let n = part.n_vertices() as f64;
    Ok(BlockEstimate {
        p_hat,
        pi_hat: part.sizes().iter().map(|&s| s as f64 / n).collect(),
    })
}

/// Frobenius distance between block matrices and Euclidean distance
/// between weight vectors. The smaller estimate is padded with zero rows,
/// columns and weights; missing diagonal entries count as 0.
pub fn compare_blocks(a: &BlockEstimate, b: &BlockEstimate) -> (f64, f64) {
    let k = a.p_hat.dim().max(b.p_hat.dim());
    let pad = |m: DMatrix<f64>| DMatrix::from_fn(k, k, |i, j| if i < m.nrows() && j < m.ncols() { m[(i, j)] } else { 0.0 });
    let pa = pad(a.p_hat.to_matrix());
    let pb = pad(b.p_hat.to_matrix());
    let w = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let weight = (0..k).map(|i| (w(&a.pi_hat, i) - w(&b.pi_hat, i)).powi(2)).sum::<f64>().sqrt();
    ((pa - pb).norm(), weight)
}

fn embed_auto(g: &SparseGraph, choice: Choice, cfg: &PipelineConfig) -> Result<(Embedding, Vec<f64>)> {
    let n = g.n_vertices();
    match choice {
        Choice::Fixed(d) => Ok((ase(g, d)?, Vec::new())),
        Choice::Auto => {
            let m = cfg.max_auto_dim.min(n.saturating_sub(1));
            if m == 0 {
                return Err(Error::invalid("subgraph too small to embed"));
            }
            let magnitudes = scree(g, m)?;
            let d = choose_dimension(magnitudes.clone(), cfg.elbow).dim;
            Ok((ase(g, d)?, magnitudes))
        }
    }
}

fn auto_dim(g: &SparseGraph, cfg: &PipelineConfig) -> Result<usize> {
    let m = cfg.max_auto_dim.min(g.n_vertices().saturating_sub(1));
    if m == 0 {
        return Err(Error::invalid("subgraph too small to embed"));
    }
    Ok(choose_dimension(scree(g, m)?, cfg.elbow).dim)
}

fn motif_cut(cfg: &PipelineConfig, dm: &DissimilarityMatrix) -> Result<MotifCut> {
    if let Some(c) = cfg.motif_cut {
        return Ok(match c {
            MotifCut::Count(m) => MotifCut::Count(m.min(dm.len())),
            other => other,
        });
    }
    match cfg.motif_source {
        MotifSource::PValue => Ok(MotifCut::Height(0.95)),
        MotifSource::Statistic => {
            let mut d = dm.s_hat.clone();
            d.fill_diagonal(0.0);
            let merges = crate::motif::agglomerate(&d, cfg.linkage)?;
            let heights: Vec<f64> = merges.iter().map(|m| m.height).collect();
            let cut = heights
                .windows(2)
                .enumerate()
                .max_by(|(ia, a), (ib, b)| (a[1] - a[0]).total_cmp(&(b[1] - b[0])).then(ib.cmp(ia)))
                .map(|(_, w)| 0.5 * (w[0] + w[1]))
                .unwrap_or(f64::INFINITY);
            Ok(MotifCut::Height(cut))
        }
    }
}

struct Context<'a> {
    cfg: &'a PipelineConfig,
    root: SeedStream,
}

impl Context<'_> {
    fn stream(&self, path: &NodePath) -> SeedStream {
        path.0.iter().fold(self.root, |s, &i| s.derive_index(i as u64))
    }
}

/// Runs the full recursive procedure on `g`.
pub fn detect_hierarchy(g: &SparseGraph, cfg: &PipelineConfig) -> Result<HierarchyNode> {
    cfg.validate()?;
    let ctx = Context {
        cfg,
        root: SeedStream::new(cfg.seed),
    };
    let vertices: Vec<usize> = (0..g.n_vertices()).collect();
    Ok(process(&ctx, g, vertices, NodePath::root(), None))
}

fn process(
    ctx: &Context<'_>,
    g: &SparseGraph,
    vertices: Vec<usize>,
    path: NodePath,
    precomputed: Option<Embedding>,
) -> HierarchyNode {
    let cfg = ctx.cfg;
    let depth = path.depth();
    if vertices.len() <= cfg.min_cluster_size() {
        return HierarchyNode::terminal(path, vertices, NodeStatus::Small);
    }
    if depth >= cfg.max_depth {
        return HierarchyNode::terminal(path, vertices, NodeStatus::MaxDepth);
    }
    let mut node = HierarchyNode::terminal(path.clone(), vertices, NodeStatus::Split);
    match split(ctx, g, &mut node, precomputed) {
        Ok(children) => {
            node.children = children;
        }
        Err(e) => {
            let e = e.context(format!("node {path}"));
            warn!("{e}");
            node.status = NodeStatus::Degenerate { message: e.to_string() };
        }
    }
    node
}

/// Steps one to six for a single node. Returns the children; fills in the
/// node's own diagnostics as they become available.
fn split(
    ctx: &Context<'_>,
    g: &SparseGraph,
    node: &mut HierarchyNode,
    precomputed: Option<Embedding>,
) -> Result<Vec<HierarchyNode>> {
    let cfg = ctx.cfg;
    let stream = ctx.stream(&node.path);
    let is_root = node.depth == 0;

    // Step 1: embed.
    let (embedding, scree_vals) = match precomputed {
        Some(e) => (e, Vec::new()),
        None => {
            let choice = if is_root { cfg.top_dim } else { cfg.d };
            embed_auto(g, choice, cfg)?
        }
    };
    node.embedding_dim = Some(embedding.dim());
    node.eigenvalues = embedding.eigenvalues.clone();
    node.scree = scree_vals;
    let x = if cfg.sphere {
        project_to_sphere(&embedding).0.x_hat
    } else {
        embedding.x_hat.clone()
    };

    // Step 2: cluster.
    let r = match cfg.n_subgraphs {
        Choice::Fixed(r) => r,
        Choice::Auto => {
            if x.ncols() < 2 {
                node.status = NodeStatus::Unsplit;
                return Ok(Vec::new());
            }
            let est = estimate_num_subgraphs(&x, x.ncols(), cfg.n_mc, &mut stream.derive("phi").rng())?;
            let r = est.r_hat;
            node.phi = Some(est);
            r
        }
    };
    if r < 2 {
        node.status = NodeStatus::Unsplit;
        return Ok(Vec::new());
    }
    let (part, seeds): (VertexPartition, SeedSet) = seeded_subspace_cluster(&x, r, &mut stream.derive("cluster").rng())?;
    node.seeds = Some(seeds.source_rows.iter().map(|&i| node.vertices[i]).collect());
    node.blocks = Some(estimate_block_matrix(g, &part)?);
    let members = part.members();
    debug!("node {} split into sizes {:?}", node.path, part.sizes());

    // Step 3: re-embed the children.
    let subgraphs: Vec<SparseGraph> = members
        .par_iter()
        .map(|m| induced_subgraph(g, m))
        .collect::<Result<_>>()?;
    let child_dim = match cfg.d {
        Choice::Fixed(d) => d,
        Choice::Auto => subgraphs
            .par_iter()
            .filter(|s| s.n_vertices() > 2)
            .map(|s| auto_dim(s, cfg))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max()
            .unwrap_or(1),
    };
    node.child_dim = Some(child_dim);
    let embeddings: Vec<Option<Embedding>> = subgraphs
        .par_iter()
        .map(|s| {
            if s.n_vertices() <= child_dim + 1 {
                Ok(None)
            } else {
                ase(s, child_dim).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let tested: Vec<usize> = (0..r).filter(|&c| embeddings[c].is_some()).collect();
    if tested.len() < r {
        warn!(
            "node {}: {} children too small to embed into {child_dim} dimensions",
            node.path,
            r - tested.len()
        );
    }

    // Steps 4 and 5: compare and group.
    let mut motif_of_child = vec![None; r];
    let mut representatives = Vec::new();
    if !tested.is_empty() {
        let mats: Vec<DMatrix<f64>> = tested
            .iter()
            .map(|&c| {
                let e = embeddings[c].as_ref().expect("tested children are embedded");
                if cfg.sphere {
                    project_to_sphere(e).0.x_hat
                } else {
                    e.x_hat.clone()
                }
            })
            .collect();
        let dm = dissimilarity_matrix(&mats, &cfg.motif_test, &mut stream.derive("motif").rng())?;
        let cut = motif_cut(cfg, &dm)?;
        let motifs = cluster_motifs(&dm, cfg.motif_source, cfg.linkage, cut)?;
        let sizes: Vec<usize> = tested.iter().map(|&c| members[c].len()).collect();
        representatives = representative_subgraph(&sizes, &motifs)
            .into_iter()
            .map(|t| tested[t])
            .collect();
        for (t, &c) in tested.iter().enumerate() {
            motif_of_child[c] = Some(motifs.motif_label[t]);
        }
        node.dissimilarity = Some(dm);
        node.motifs = Some(motifs);
    }
    node.tested_children = tested;
    node.representatives = representatives.clone();

    // Step 6: recurse on one representative per motif.
    let child_paths: Vec<NodePath> = (0..r).map(|c| node.path.child(c)).collect();
    let parent_vertices = node.vertices.clone();
    let jobs: Vec<(usize, Option<Embedding>)> = embeddings.into_iter().enumerate().collect();
    let children = jobs
        .into_par_iter()
        .map(|(c, emb)| {
            let verts: Vec<usize> = members[c].iter().map(|&i| parent_vertices[i]).collect();
            match motif_of_child[c] {
                Some(m) if representatives[m] == c => {
                    process(ctx, &subgraphs[c], verts, child_paths[c].clone(), emb)
                }
                Some(m) => HierarchyNode::terminal(
                    child_paths[c].clone(),
                    verts,
                    NodeStatus::Represented { by: representatives[m] },
                ),
                None => HierarchyNode::terminal(
                    child_paths[c].clone(),
                    verts,
                    NodeStatus::Degenerate {
                        message: format!("too small to embed into {child_dim} dimensions"),
                    },
                ),
            }
        })
        .collect();
    Ok(children)
}
