//! Dataset ingestion: the TU-Dortmund text layout and a single-file JSON
//! format used for caching and for synthetic datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{rows_to_array, GraphDataset, MeasureGraph};

fn tu_path(root: &Path, name: &str, suffix: &str) -> PathBuf {
    root.join(format!("{name}_{suffix}.txt"))
}

fn read_required(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "required file is missing".into(),
        });
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    if path.is_file() {
        fs::read_to_string(path).map(Some).map_err(|e| Error::io(path, e))
    } else {
        Ok(None)
    }
}

fn non_empty_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_fields<T: std::str::FromStr>(path: &Path, lineno: usize, line: &str) -> Result<Vec<T>> {
    line.split(',')
        .map(|tok| {
            tok.trim().parse::<T>().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                msg: format!("line {lineno}: cannot parse {:?}", tok.trim()),
            })
        })
        .collect()
}

fn parse_column<T: std::str::FromStr>(path: &Path, text: &str) -> Result<Vec<T>> {
    non_empty_lines(text)
        .map(|(n, l)| {
            let mut v = parse_fields::<T>(path, n, l)?;
            if v.len() != 1 {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    msg: format!("line {n}: expected one value, found {}", v.len()),
                });
            }
            Ok(v.remove(0))
        })
        .collect()
}

/// Load a dataset in the TU-Dortmund benchmark layout from `root_dir`.
///
/// Continuous node attributes become features; failing those, discrete node
/// labels are one-hot encoded; failing both, every node gets the constant
/// feature `1.0`. Graph labels are remapped to `0..num_classes` in sorted
/// order of their original values. Measures are uniform and the structure
/// is the binary adjacency matrix (self-loops dropped).
pub fn load_tu_dataset(root_dir: impl AsRef<Path>, name: &str) -> Result<GraphDataset> {
    let root = root_dir.as_ref();
    let a_path = tu_path(root, name, "A");
    let ind_path = tu_path(root, name, "graph_indicator");
    let a_text = read_required(&a_path)?;
    let ind_text = read_required(&ind_path)?;

    let indicator: Vec<usize> = parse_column(&ind_path, &ind_text)?;
    let num_nodes = indicator.len();
    if num_nodes == 0 {
        return Err(Error::Corruption("graph indicator lists no nodes".into()));
    }
    if indicator.contains(&0) {
        return Err(Error::Corruption("graph ids are 1-based; found id 0".into()));
    }
    let num_graphs = *indicator.iter().max().unwrap_or(&0);

    // global node -> (graph, local index)
    let mut sizes = vec![0usize; num_graphs];
    let mut local = Vec::with_capacity(num_nodes);
    for &gid in &indicator {
        local.push(sizes[gid - 1]);
        sizes[gid - 1] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Corruption(format!("graph {} has zero nodes", empty + 1)));
    }

    let mut edges: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); num_graphs];
    for (lineno, line) in non_empty_lines(&a_text) {
        let pair: Vec<usize> = parse_fields(&a_path, lineno, line)?;
        if pair.len() != 2 {
            return Err(Error::Format {
                path: a_path.clone(),
                msg: format!("line {lineno}: expected an edge pair"),
            });
        }
        let (u, v) = (pair[0], pair[1]);
        if u == 0 || v == 0 || u > num_nodes || v > num_nodes {
            return Err(Error::Corruption(format!(
                "{}: line {lineno}: node index out of range 1..={num_nodes}",
                a_path.display()
            )));
        }
        let (gu, gv) = (indicator[u - 1], indicator[v - 1]);
        if gu != gv {
            return Err(Error::Corruption(format!(
                "{}: line {lineno}: edge joins graphs {gu} and {gv}",
                a_path.display()
            )));
        }
        let (a, b) = (local[u - 1], local[v - 1]);
        if a != b {
            edges[gu - 1].insert((a.min(b), a.max(b)));
        }
    }

    let features = node_features(root, name, num_nodes)?;

    let labels_path = tu_path(root, name, "graph_labels");
    let (labels, num_classes) = match read_optional(&labels_path)? {
        Some(text) => {
            let raw: Vec<i64> = parse_column(&labels_path, &text)?;
            if raw.len() != num_graphs {
                return Err(Error::Corruption(format!(
                    "{} graph labels for {num_graphs} graphs",
                    raw.len()
                )));
            }
            let classes: BTreeMap<i64, usize> = raw
                .iter()
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(i, v)| (v, i))
                .collect();
            let k = classes.len();
            (raw.iter().map(|v| Some(classes[v])).collect::<Vec<_>>(), k)
        }
        None => (vec![None; num_graphs], 1),
    };

    let d = features.ncols();
    let mut rows_by_graph: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    for (node, &gid) in indicator.iter().enumerate() {
        rows_by_graph[gid - 1].push(node);
    }
    let graphs = rows_by_graph
        .iter()
        .enumerate()
        .map(|(g, rows)| {
            let m = rows.len();
            let mut x = Array2::zeros((m, d));
            for (li, &node) in rows.iter().enumerate() {
                x.row_mut(li).assign(&features.row(node));
            }
            let mut adj = Array2::zeros((m, m));
            for &(a, b) in &edges[g] {
                adj[[a, b]] = 1.0;
                adj[[b, a]] = 1.0;
            }
            MeasureGraph::uniform(x, adj, labels[g])
        })
        .collect::<Result<Vec<_>>>()?;
    GraphDataset::new(name, graphs, num_classes)
}

fn node_features(root: &Path, name: &str, num_nodes: usize) -> Result<Array2<f64>> {
    let attr_path = tu_path(root, name, "node_attributes");
    if let Some(text) = read_optional(&attr_path)? {
        let rows = non_empty_lines(&text)
            .map(|(n, l)| parse_fields::<f64>(&attr_path, n, l))
            .collect::<Result<Vec<_>>>()?;
        if rows.len() != num_nodes {
            return Err(Error::Corruption(format!(
                "{} attribute rows for {num_nodes} nodes",
                rows.len()
            )));
        }
        return rows_to_array(&rows, num_nodes, "node attributes");
    }
    let lab_path = tu_path(root, name, "node_labels");
    if let Some(text) = read_optional(&lab_path)? {
        let raw: Vec<i64> = parse_column(&lab_path, &text)?;
        if raw.len() != num_nodes {
            return Err(Error::Corruption(format!(
                "{} node labels for {num_nodes} nodes",
                raw.len()
            )));
        }
        let values: BTreeMap<i64, usize> = raw
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v, i))
            .collect();
        let mut x = Array2::zeros((num_nodes, values.len()));
        for (node, v) in raw.iter().enumerate() {
            x[[node, values[v]]] = 1.0;
        }
        return Ok(x);
    }
    Ok(Array2::ones((num_nodes, 1)))
}

/// Write a dataset in the TU layout (always with node attributes).
/// Structures must be binary adjacency matrices.
pub fn write_tu_dataset(dataset: &GraphDataset, root_dir: impl AsRef<Path>) -> Result<()> {
    let root = root_dir.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let name = dataset.name();
    let mut a = String::new();
    let mut ind = String::new();
    let mut attrs = String::new();
    let mut labels = String::new();
    let mut offset = 0usize;
    for (gi, g) in dataset.graphs().iter().enumerate() {
        check_binary(g, gi)?;
        let m = g.num_nodes();
        for (i, j) in g.edges() {
            a.push_str(&format!("{}, {}\n{}, {}\n", offset + i + 1, offset + j + 1, offset + j + 1, offset + i + 1));
        }
        for row in g.features().outer_iter() {
            ind.push_str(&format!("{}\n", gi + 1));
            let cols: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            attrs.push_str(&cols.join(", "));
            attrs.push('\n');
        }
        if let Some(l) = g.label() {
            labels.push_str(&format!("{l}\n"));
        }
        offset += m;
    }
    let write = |suffix: &str, body: &str| {
        let p = tu_path(root, name, suffix);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("A", &a)?;
    write("graph_indicator", &ind)?;
    if dataset.feature_dim() > 0 {
        write("node_attributes", &attrs)?;
    }
    if dataset.labels().is_some() {
        write("graph_labels", &labels)?;
    }
    Ok(())
}

fn check_binary(g: &MeasureGraph, index: usize) -> Result<()> {
    if g.structure().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Input(format!(
            "graph {index}: only binary adjacency structures can be serialized"
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetDoc {
    name: String,
    num_classes: usize,
    graphs: Vec<GraphDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphDoc {
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    measure: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

/// Serialize a dataset to the JSON document format: per-graph node counts,
/// 0-based edge lists, feature rows and labels. Non-uniform measures are
/// stored explicitly.
pub fn dataset_to_json(dataset: &GraphDataset) -> Result<String> {
    let graphs = dataset
        .graphs()
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            check_binary(g, gi)?;
            let m = g.num_nodes();
            let uniform = g.measure().iter().all(|&p| p == 1.0 / m as f64);
            Ok(GraphDoc {
                num_nodes: m,
                edges: g.edges().into_iter().map(|(i, j)| [i, j]).collect(),
                features: g.features().outer_iter().map(|r| r.to_vec()).collect(),
                measure: (!uniform).then(|| g.measure().to_vec()),
                label: g.label(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = DatasetDoc {
        name: dataset.name().to_string(),
        num_classes: dataset.num_classes(),
        graphs,
    };
    Ok(serde_json::to_string(&doc)?)
}

pub fn dataset_from_json(text: &str) -> Result<GraphDataset> {
    let doc: DatasetDoc = serde_json::from_str(text)?;
    let graphs = doc
        .graphs
        .into_iter()
        .enumerate()
        .map(|(gi, gd)| {
            let m = gd.num_nodes;
            let x = rows_to_array(&gd.features, m, "features")?;
            let mut adj = Array2::zeros((m, m));
            for [i, j] in gd.edges {
                if i >= m || j >= m {
                    return Err(Error::Corruption(format!("graph {gi}: edge ({i}, {j}) out of range")));
                }
                if i != j {
                    adj[[i, j]] = 1.0;
                    adj[[j, i]] = 1.0;
                }
            }
            match gd.measure {
                Some(mu) => MeasureGraph::new(x, adj, Array1::from(mu), gd.label),
                None => MeasureGraph::uniform(x, adj, gd.label),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    GraphDataset::new(doc.name, graphs, doc.num_classes)
}

pub fn save_dataset_json(dataset: &GraphDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset_to_json(dataset)?).map_err(|e| Error::io(path, e))
}

pub fn load_dataset_json(path: impl AsRef<Path>) -> Result<GraphDataset> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "dataset file is missing".into(),
        });
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    dataset_from_json(&text)
}

/// Hex SHA-256 of a byte string.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hash of a graph's canonical JSON form.
pub fn graph_hash(g: &MeasureGraph) -> String {
    // serialization of a validated graph cannot fail
    content_hash(serde_json::to_string(g).expect("graph serializes").as_bytes())
}

pub fn save_graph_json(g: &MeasureGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, serde_json::to_string_pretty(g)?).map_err(|e| Error::io(path, e))
}

pub fn load_graph_json(path: impl AsRef<Path>) -> Result<MeasureGraph> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "graph file is missing".into(),
        });
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
