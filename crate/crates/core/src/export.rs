//! File formats for embeddings, Gram matrices and JSON reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::GraphEmbedding;

/// Metadata written next to an embedding CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub num_reference_nodes: usize,
    pub feature_dim: usize,
    pub alpha: f64,
    pub eta: f64,
    pub outer_iters: usize,
    pub reference_hash: String,
    pub rows: usize,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `id,label,v_0,...` with the node block followed by the edge block; an
/// unlabeled graph leaves the label field empty.
pub fn embeddings_csv(embeddings: &[GraphEmbedding], labels: &[Option<usize>]) -> Result<String> {
    if embeddings.len() != labels.len() {
        return Err(Error::Shape(format!("{} embeddings but {} labels", embeddings.len(), labels.len())));
    }
    let width = embeddings.first().map_or(0, GraphEmbedding::len);
    let mut out = String::from("id,label");
    for c in 0..width {
        write!(out, ",v{c}").expect("writing to a String");
    }
    out.push('\n');
    for (id, (e, label)) in embeddings.iter().zip(labels).enumerate() {
        if e.len() != width {
            return Err(Error::Shape("embeddings have different lengths".into()));
        }
        write!(out, "{id},").expect("writing to a String");
        if let Some(l) = label {
            write!(out, "{l}").expect("writing to a String");
        }
        for v in e.node_block.iter().chain(e.edge_block.iter()) {
            write!(out, ",{v}").expect("writing to a String");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes `csv_path` and a JSON sidecar at the same path with extension `json`.
pub fn write_embeddings(
    csv_path: impl AsRef<Path>,
    embeddings: &[GraphEmbedding],
    labels: &[Option<usize>],
    sidecar: &EmbeddingSidecar,
) -> Result<()> {
    let csv_path = csv_path.as_ref();
    write(csv_path, embeddings_csv(embeddings, labels)?)?;
    write(&csv_path.with_extension("json"), serde_json::to_string_pretty(sidecar)?)
}

pub fn matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// 8-byte little-endian `N`, then `N * N` little-endian f64 in row-major order.
pub fn gram_to_bytes(m: &Array2<f64>) -> Result<Vec<u8>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!("matrix {:?} is not square", m.dim())));
    }
    let mut out = Vec::with_capacity(8 + 8 * m.len());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn gram_from_bytes(bytes: &[u8]) -> Result<Array2<f64>> {
    let header: [u8; 8] = bytes
        .get(..8)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| Error::Corruption("gram blob shorter than its header".into()))?;
    let n = u64::from_le_bytes(header) as usize;
    let body = &bytes[8..];
    if n.checked_mul(n).and_then(|c| c.checked_mul(8)) != Some(body.len()) {
        return Err(Error::Corruption(format!("gram blob of {} bytes does not hold {n}x{n} values", body.len())));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Array2::from_shape_vec((n, n), values).expect("length checked"))
}

/// Writes `<stem>.csv` and `<stem>.bin`.
pub fn write_gram(stem: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let stem = stem.as_ref();
    write(&stem.with_extension("csv"), matrix_csv(m))?;
    write(&stem.with_extension("bin"), gram_to_bytes(m)?)
}

pub fn read_gram_binary(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    gram_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write(path.as_ref(), serde_json::to_string_pretty(value)? + "\n")
}
