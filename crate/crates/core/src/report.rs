//! Run reports: the hierarchy JSON with its vertex sidecar, the run
//! manifest, and a static HTML summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::graph::SparseGraph;
use crate::motif::Merge;
use crate::pipeline::{HierarchyNode, NodeStatus, PipelineConfig};

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// JSON view of one hierarchy node. Vertex membership lives in the
/// sidecar CSV: a vertex belongs to every node whose path prefixes the
/// vertex's path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub path: String,
    pub depth: usize,
    pub n_vertices: usize,
    pub status: NodeStatus,
    pub embedding_dim: Option<usize>,
    pub eigenvalues: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub scree: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub phi: Option<PhiReport>,
    /// Vertex ids of the surviving seeds.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seeds: Option<Vec<String>>,
    pub child_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s_hat: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_values: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandwidths: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub tested_children: Vec<usize>,
    /// Motif of every child (`null` for children left out of the tests).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub motif_labels: Vec<Option<usize>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub dendrogram: Vec<Merge>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub representatives: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_hat: Option<Vec<Vec<Option<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pi_hat: Option<Vec<f64>>,
    pub children: Vec<NodeReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiReport {
    pub r_hat: usize,
    pub k: Vec<usize>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub seed: u64,
    pub config: PipelineConfig,
    pub vertices_file: String,
    pub root: NodeReport,
}

pub fn node_report(node: &HierarchyNode, g: &SparseGraph) -> NodeReport {
    NodeReport {
        path: node.path.to_string(),
        depth: node.depth,
        n_vertices: node.n_vertices(),
        status: node.status.clone(),
        embedding_dim: node.embedding_dim,
        eigenvalues: node.eigenvalues.clone(),
        scree: node.scree.clone(),
        phi: node.phi.as_ref().map(|p| PhiReport {
            r_hat: p.r_hat,
            k: p.ks.clone(),
            phi: p.phi.clone(),
        }),
        seeds: node
            .seeds
            .as_ref()
            .map(|s| s.iter().map(|&v| g.vertex_id(v).to_string()).collect()),
        child_dim: node.child_dim,
        s_hat: node.dissimilarity.as_ref().map(|d| rows(&d.s_hat)),
        p_values: node.dissimilarity.as_ref().and_then(|d| d.p_values.as_ref().map(rows)),
        bandwidths: node.dissimilarity.as_ref().map(|d| rows(&d.sigmas)),
        tested_children: node.tested_children.clone(),
        motif_labels: (0..node.children.len()).map(|c| node.motif_of_child(c)).collect(),
        dendrogram: node.motifs.as_ref().map(|m| m.dendrogram.clone()).unwrap_or_default(),
        representatives: node.representatives.clone(),
        p_hat: node.blocks.as_ref().map(|b| b.p_hat.values.clone()),
        pi_hat: node.blocks.as_ref().map(|b| b.pi_hat.clone()),
        children: node.children.iter().map(|c| node_report(c, g)).collect(),
    }
}

pub fn hierarchy_report(root: &HierarchyNode, g: &SparseGraph, cfg: &PipelineConfig, vertices_file: &str) -> HierarchyReport {
    HierarchyReport {
        seed: cfg.seed,
        config: cfg.clone(),
        vertices_file: vertices_file.to_string(),
        root: node_report(root, g),
    }
}

/// `vertex_id,path` with the deepest node containing each vertex.
pub fn write_vertex_sidecar<W: Write>(mut out: W, root: &HierarchyNode, g: &SparseGraph) -> Result<()> {
    let mut deepest = vec![String::new(); g.n_vertices()];
    for node in root.walk() {
        let p = node.path.to_string();
        for &v in &node.vertices {
            deepest[v] = p.clone();
        }
    }
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["vertex_id", "path"]).map_err(std::io::Error::other)?;
    for &v in &root.vertices {
        w.write_record([g.vertex_id(v), deepest[v].as_str()]).map_err(std::io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex<R: Read>(mut source: R) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let k = source.read(&mut buf)?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hasher.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(std::fs::File::open(path)?)?,
    })
}

/// Everything needed to rerun and audit a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub sub_seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub stage_seconds: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}

fn table(out: &mut String, caption: &str, m: &[Vec<f64>]) {
    let _ = write!(out, "<table><caption>{}</caption><tr><th></th>", esc(caption));
    for c in 0..m.first().map_or(0, Vec::len) {
        let _ = write!(out, "<th>{c}</th>");
    }
    out.push_str("</tr>");
    for (i, row) in m.iter().enumerate() {
        let _ = write!(out, "<tr><th>{i}</th>");
        for v in row {
            let _ = write!(out, "<td>{}</td>", fmt_num(*v));
        }
        out.push_str("</tr>");
    }
    out.push_str("</table>\n");
}

fn dendrogram_list(out: &mut String, merges: &[Merge], leaves: usize, id: usize) {
    if id < leaves {
        let _ = write!(out, "<li>child {id}</li>");
        return;
    }
    let m = &merges[id - leaves];
    let _ = write!(out, "<li>merge at {}<ul>", fmt_num(m.height));
    dendrogram_list(out, merges, leaves, m.left);
    dendrogram_list(out, merges, leaves, m.right);
    out.push_str("</ul></li>");
}

fn render_node(out: &mut String, n: &NodeReport) {
    let status = match &n.status {
        NodeStatus::Split => "split".to_string(),
        NodeStatus::Small => "below size threshold".to_string(),
        NodeStatus::MaxDepth => "maximum depth".to_string(),
        NodeStatus::Represented { by } => format!("represented by sibling {by}"),
        NodeStatus::Unsplit => "single subgraph".to_string(),
        NodeStatus::Degenerate { message } => format!("degenerate: {message}"),
    };
    let _ = writeln!(
        out,
        "<section><h2>Node {}</h2><p>{} vertices, depth {}, {}</p>",
        esc(&n.path),
        n.n_vertices,
        n.depth,
        esc(&status)
    );
    if let Some(d) = n.embedding_dim {
        let eig: Vec<String> = n.eigenvalues.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(out, "<p>Embedding dimension {d}; eigenvalues {}</p>", eig.join(", "));
    }
    if let Some(phi) = &n.phi {
        let curve = vec![phi.phi.clone()];
        table(out, &format!("phi for k = {}..; estimated R = {}", phi.k[0], phi.r_hat), &curve);
    }
    if let Some(s) = &n.s_hat {
        table(out, "Pairwise statistics", s);
    }
    if let Some(p) = &n.p_values {
        table(out, "Permutation p-values", p);
    }
    if let (Some(p), Some(pi)) = (&n.p_hat, &n.pi_hat) {
        let m: Vec<Vec<f64>> = p.iter().map(|r| r.iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect();
        table(out, "Block densities between children", &m);
        table(out, "Child weights", std::slice::from_ref(pi));
    }
    if !n.motif_labels.is_empty() {
        out.push_str("<table><caption>Children</caption><tr><th>child</th><th>vertices</th><th>motif</th><th>representative</th></tr>");
        for (c, child) in n.children.iter().enumerate() {
            let motif = n.motif_labels[c].map_or("-".to_string(), |m| m.to_string());
            let rep = if n.representatives.contains(&c) { "yes" } else { "" };
            let _ = write!(out, "<tr><td>{c}</td><td>{}</td><td>{motif}</td><td>{rep}</td></tr>", child.n_vertices);
        }
        out.push_str("</table>\n");
    }
    if !n.dendrogram.is_empty() {
        out.push_str("<p>Dendrogram (indices refer to tested children in order)</p><ul>");
        let leaves = n.dendrogram.len() + 1;
        dendrogram_list(out, &n.dendrogram, leaves, 2 * leaves - 2);
        out.push_str("</ul>\n");
    }
    out.push_str("</section>\n");
    for c in &n.children {
        if !c.children.is_empty() || c.embedding_dim.is_some() {
            render_node(out, c);
        }
    }
}

/// Self-contained HTML summary of a hierarchy report.
pub fn render_html(report: &HierarchyReport) -> String {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Hierarchy report</title>\n\
         <style>body{font-family:sans-serif;max-width:70em;margin:auto}table{border-collapse:collapse;margin:1em 0}\
         td,th{border:1px solid #bbb;padding:2px 6px;text-align:right}caption{text-align:left;font-weight:bold}</style>\n\
         </head><body>\n<h1>Hierarchy report</h1>\n",
    );
    let _ = writeln!(out, "<p>Seed {}</p>", report.seed);
    let cfg = serde_json::to_string_pretty(&report.config).unwrap_or_default();
    let _ = writeln!(out, "<details><summary>Configuration</summary><pre>{}</pre></details>", esc(&cfg));
    render_node(&mut out, &report.root);
    out.push_str("</body></html>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(&b"abc"[..]).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn html_escapes() {
        assert_eq!(esc("<a & b>"), "&lt;a &amp; b&gt;");
    }
}
