//! Undirected simple graphs in compressed sparse row form, plus the
//! structural utilities every stage shares.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric, hollow 0/1 adjacency structure.
///
/// Neighbour lists are sorted and duplicate free. Vertex labels from the
/// source data are carried along through subgraph extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    vertex_ids: Vec<String>,
}

/// What [`load_edge_list`] had to clean up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadSummary {
    pub lines: usize,
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
}

impl SparseGraph {
    /// Builds a graph on `n` vertices labelled `0..n` from an edge iterator.
    /// Loops are dropped and duplicates collapse.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let ids = (0..n).map(|i| i.to_string()).collect();
        Self::from_labeled_edges(ids, edges)
    }

    pub fn from_labeled_edges<I>(vertex_ids: Vec<String>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let n = vertex_ids.len();
        if n > u32::MAX as usize {
            return Err(Error::invalid("too many vertices"));
        }
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n {
                return Err(Error::IndexOutOfRange { index: u, len: n });
            }
            if v >= n {
                return Err(Error::IndexOutOfRange { index: v, len: n });
            }
            if u == v {
                continue;
            }
            adj[u].push(v as u32);
            adj[v].push(u as u32);
        }
        Ok(Self::from_adjacency_lists(vertex_ids, adj))
    }

    /// Assembles the CSR arrays, sorting and deduplicating each list.
    pub(crate) fn from_adjacency_lists(vertex_ids: Vec<String>, mut adj: Vec<Vec<u32>>) -> Self {
        adj.par_iter_mut().for_each(|l| {
            l.sort_unstable();
            l.dedup();
        });
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        offsets.push(0);
        let total: usize = adj.iter().map(Vec::len).sum();
        let mut neighbors = Vec::with_capacity(total);
        for l in &adj {
            neighbors.extend_from_slice(l);
            offsets.push(neighbors.len());
        }
        SparseGraph {
            offsets,
            neighbors,
            vertex_ids,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    pub fn vertex_ids(&self) -> &[String] {
        &self.vertex_ids
    }

    pub fn vertex_id(&self, v: usize) -> &str {
        &self.vertex_ids[v]
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_vertices()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(|&v| v as usize)
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Fraction of the `n(n-1)/2` vertex pairs that are edges.
    pub fn edge_density(&self) -> f64 {
        let n = self.n_vertices() as f64;
        if n < 2.0 {
            return 0.0;
        }
        self.n_edges() as f64 / (n * (n - 1.0) / 2.0)
    }

    /// `y = A x`. Rows are independent, so the result is identical for any
    /// thread count.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_vertices());
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            *yi = self.neighbors(i).iter().map(|&j| x[j as usize]).sum();
        });
    }

    /// Dense copy of the adjacency matrix (tests and small oracles only).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n_vertices();
        let mut a = nalgebra::DMatrix::zeros(n, n);
        for (u, v) in self.edges() {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    /// Writes the graph so that [`load_edge_list`] reproduces it exactly,
    /// including vertex order. A vertex that has no lower-indexed neighbour
    /// is declared with a `v v` line, which the loader registers and drops
    /// as a loop.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for k in 0..self.n_vertices() {
            let lower: Vec<usize> = self
                .neighbors(k)
                .iter()
                .map(|&j| j as usize)
                .take_while(|&j| j < k)
                .collect();
            if lower.is_empty() {
                writeln!(out, "{0} {0}", self.vertex_ids[k])?;
            }
            for j in lower {
                writeln!(out, "{} {}", self.vertex_ids[j], self.vertex_ids[k])?;
            }
        }
        Ok(())
    }
}

/// Parses a whitespace separated edge list. Lines starting with `#` are
/// comments. Vertex tokens are arbitrary strings and receive dense indices
/// in order of first appearance.
pub fn load_edge_list<R: BufRead>(source: R) -> Result<(SparseGraph, LoadSummary)> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ids: Vec<String> = Vec::new();
    let mut adj: Vec<Vec<u32>> = Vec::new();
    let mut summary = LoadSummary::default();
    let mut intern = |tok: &str, ids: &mut Vec<String>, adj: &mut Vec<Vec<u32>>| -> usize {
        if let Some(&i) = index.get(tok) {
            return i;
        }
        let i = ids.len();
        index.insert(tok.to_string(), i);
        ids.push(tok.to_string());
        adj.push(Vec::new());
        i
    };
    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected two vertex tokens, got {trimmed:?}"),
            });
        };
        summary.lines += 1;
        let u = intern(a, &mut ids, &mut adj);
        let v = intern(b, &mut ids, &mut adj);
        if u == v {
            summary.self_loops_dropped += 1;
            continue;
        }
        adj[u].push(v as u32);
        adj[v].push(u as u32);
    }
    if ids.is_empty() {
        return Err(Error::EmptyInput("edge list has no edges".into()));
    }
    let raw: usize = adj.iter().map(Vec::len).sum::<usize>() / 2;
    let g = SparseGraph::from_adjacency_lists(ids, adj);
    summary.duplicate_edges = raw - g.n_edges();
    Ok((g, summary))
}

/// Connected components as sorted vertex lists, ordered by their smallest
/// vertex index.
pub fn connected_components(g: &SparseGraph) -> Vec<Vec<usize>> {
    let n = g.n_vertices();
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        queue.push_back(s);
        let mut comp = Vec::new();
        while let Some(u) = queue.pop_front() {
            comp.push(u);
            for &v in g.neighbors(u) {
                let v = v as usize;
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Induced subgraph on the largest component. Ties go to the component with
/// the smallest vertex index.
pub fn largest_connected_component(g: &SparseGraph) -> Result<(SparseGraph, Vec<usize>)> {
    if g.n_vertices() == 0 {
        return Err(Error::EmptyInput("graph has no vertices".into()));
    }
    let comps = connected_components(g);
    let mut best = 0;
    for (i, c) in comps.iter().enumerate() {
        if c.len() > comps[best].len() {
            best = i;
        }
    }
    let vertices = comps.into_iter().nth(best).unwrap_or_default();
    let sub = induced_subgraph(g, &vertices)?;
    Ok((sub, vertices))
}

/// Subgraph induced by `vertices`; vertex `i` of the result is
/// `vertices[i]` of `g`.
pub fn induced_subgraph(g: &SparseGraph, vertices: &[usize]) -> Result<SparseGraph> {
    if vertices.is_empty() {
        return Err(Error::EmptyInput("vertex set is empty".into()));
    }
    let n = g.n_vertices();
    let mut local = vec![u32::MAX; n];
    for (i, &v) in vertices.iter().enumerate() {
        if v >= n {
            return Err(Error::IndexOutOfRange { index: v, len: n });
        }
        if local[v] != u32::MAX {
            return Err(Error::invalid(format!("vertex {v} listed twice")));
        }
        local[v] = i as u32;
    }
    let adj: Vec<Vec<u32>> = vertices
        .par_iter()
        .map(|&v| {
            g.neighbors(v)
                .iter()
                .filter_map(|&w| {
                    let l = local[w as usize];
                    (l != u32::MAX).then_some(l)
                })
                .collect()
        })
        .collect();
    let ids = vertices.iter().map(|&v| g.vertex_ids[v].clone()).collect();
    Ok(SparseGraph::from_adjacency_lists(ids, adj))
}

/// Assignment of every vertex to one of `n_clusters` nonempty clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexPartition {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl VertexPartition {
    pub fn new(labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        let mut counts = vec![0usize; n_clusters];
        for &l in &labels {
            if l >= n_clusters {
                return Err(Error::invalid(format!(
                    "label {l} out of range for {n_clusters} clusters"
                )));
            }
            counts[l] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("cluster {empty} is empty")));
        }
        Ok(VertexPartition { labels, n_clusters })
    }

    /// Relabels arbitrary labels to `0..R` in order of first appearance.
    pub fn from_raw_labels<T: Eq + std::hash::Hash + Clone>(raw: &[T]) -> Self {
        let mut map: HashMap<T, usize> = HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(l.clone()).or_insert(next)
            })
            .collect();
        VertexPartition {
            labels,
            n_clusters: map.len(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// Vertex lists per cluster, each in increasing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_clusters];
        for (v, &l) in self.labels.iter().enumerate() {
            m[l].push(v);
        }
        m
    }
}

/// Observed edge frequency between every pair of clusters. Diagonal entries
/// count unordered pairs inside a cluster and are `None` when the cluster
/// has fewer than two vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDensity {
    pub values: Vec<Vec<Option<f64>>>,
}

impl BlockDensity {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    /// Matrix form with missing entries set to zero.
    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        let k = self.dim();
        nalgebra::DMatrix::from_fn(k, k, |i, j| self.values[i][j].unwrap_or(0.0))
    }
}

pub fn block_density(g: &SparseGraph, part: &VertexPartition) -> Result<BlockDensity> {
    if part.n_vertices() != g.n_vertices() {
        return Err(Error::DimensionMismatch(part.n_vertices(), g.n_vertices()));
    }
    let r = part.n_clusters();
    let mut counts = vec![vec![0usize; r]; r];
    for (u, v) in g.edges() {
        let (a, b) = (part.label(u), part.label(v));
        counts[a][b] += 1;
        if a != b {
            counts[b][a] += 1;
        }
    }
    let sizes = part.sizes();
    let values = (0..r)
        .map(|i| {
            (0..r)
                .map(|j| {
                    let pairs = if i == j {
                        sizes[i] * sizes[i].saturating_sub(1) / 2
                    } else {
                        sizes[i] * sizes[j]
                    };
                    (pairs > 0).then(|| counts[i][j] as f64 / pairs as f64)
                })
                .collect()
        })
        .collect();
    Ok(BlockDensity { values })
}
