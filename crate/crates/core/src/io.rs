//! CSV readers and writers for the stage artifacts.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::cluster::SubgraphCountEstimate;
use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::graph::VertexPartition;
use crate::hsbm::LatentPositions;

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(out)
}

/// Shortest representation that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

/// One row per vertex. Column headers carry the eigenvalues as
/// `dim1:<lambda>`.
pub fn write_embedding<W: Write>(out: W, e: &Embedding, vertex_ids: &[String]) -> Result<()> {
    if vertex_ids.len() != e.n() {
        return Err(Error::DimensionMismatch(vertex_ids.len(), e.n()));
    }
    let mut w = writer(out);
    let mut header = vec!["vertex_id".to_string()];
    header.extend(e.eigenvalues.iter().enumerate().map(|(c, l)| format!("dim{}:{}", c + 1, num(*l))));
    w.write_record(&header).map_err(csv_err)?;
    for (i, id) in vertex_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend((0..e.dim()).map(|c| num(e.x_hat[(i, c)])));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an embedding written by [`write_embedding`]. Headers without an
/// eigenvalue are accepted; their eigenvalue is reported as NaN.
pub fn read_embedding<R: Read>(source: R) -> Result<(Vec<String>, Embedding)> {
    let mut r = csv::ReaderBuilder::new().from_reader(source);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "expected a vertex id column and at least one coordinate".into(),
        });
    }
    let eigenvalues: Vec<f64> = headers
        .iter()
        .skip(1)
        .map(|h| h.split_once(':').and_then(|(_, l)| l.parse().ok()).unwrap_or(f64::NAN))
        .collect();
    let d = eigenvalues.len();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != d + 1 {
            return Err(Error::Parse {
                line: row + 2,
                message: format!("expected {} fields, found {}", d + 1, rec.len()),
            });
        }
        ids.push(rec[0].to_string());
        for f in rec.iter().skip(1) {
            data.push(f.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: row + 2,
                message: format!("{f:?}: {e}"),
            })?);
        }
    }
    if ids.is_empty() {
        return Err(Error::EmptyInput("embedding has no rows".into()));
    }
    let x_hat = DMatrix::from_row_slice(ids.len(), d, &data);
    Ok((ids, Embedding { x_hat, eigenvalues }))
}

pub fn write_scree<W: Write>(out: W, magnitudes: &[f64]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["index", "magnitude"]).map_err(csv_err)?;
    for (i, m) in magnitudes.iter().enumerate() {
        w.write_record([(i + 1).to_string(), num(*m)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_partition<W: Write>(out: W, vertex_ids: &[String], part: &VertexPartition) -> Result<()> {
    if vertex_ids.len() != part.n_vertices() {
        return Err(Error::DimensionMismatch(vertex_ids.len(), part.n_vertices()));
    }
    let mut w = writer(out);
    w.write_record(["vertex_id", "cluster"]).map_err(csv_err)?;
    for (id, l) in vertex_ids.iter().zip(part.labels()) {
        w.write_record([id.as_str(), &l.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `vertex_id,cluster` rows; cluster labels may be arbitrary strings
/// and are renumbered by first appearance.
pub fn read_partition<R: Read>(source: R) -> Result<(Vec<String>, VertexPartition)> {
    let mut r = csv::ReaderBuilder::new().from_reader(source);
    let mut ids = Vec::new();
    let mut raw = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() < 2 {
            return Err(Error::Parse {
                line: ids.len() + 2,
                message: "expected vertex_id,cluster".into(),
            });
        }
        ids.push(rec[0].to_string());
        raw.push(rec[1].to_string());
    }
    if ids.is_empty() {
        return Err(Error::EmptyInput("partition has no rows".into()));
    }
    Ok((ids, VertexPartition::from_raw_labels(&raw)))
}

pub fn write_phi<W: Write>(out: W, est: &SubgraphCountEstimate) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["k", "phi"]).map_err(csv_err)?;
    for (k, p) in est.ks.iter().zip(&est.phi) {
        w.write_record([k.to_string(), num(*p)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Square or rectangular matrix with an index header row.
pub fn write_matrix<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = writer(out);
    let mut header = vec![String::new()];
    header.extend((0..m.ncols()).map(|c| c.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..m.nrows() {
        let mut rec = vec![i.to_string()];
        rec.extend((0..m.ncols()).map(|c| num(m[(i, c)])));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Truth labels of a generated graph: lowest-level block, top-level
/// subgraph and full path (child indices joined by `/`).
pub fn write_truth<W: Write>(out: W, vertex_ids: &[String], latent: &LatentPositions) -> Result<()> {
    if vertex_ids.len() != latent.n() {
        return Err(Error::DimensionMismatch(vertex_ids.len(), latent.n()));
    }
    let mut w = writer(out);
    w.write_record(["vertex_id", "block", "subgraph", "path"]).map_err(csv_err)?;
    for (v, id) in vertex_ids.iter().enumerate() {
        let path = latent.subgraph_path(v);
        let top = path.first().map_or(String::new(), |p| p.to_string());
        let joined = path.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("/");
        w.write_record([id.clone(), latent.block_label[v].to_string(), top, joined])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
