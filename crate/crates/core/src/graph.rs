//! Measure graphs: node features, a structure matrix and a probability
//! measure over nodes, plus the feature transforms applied before transport.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MEASURE_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// A graph `(X, A, mu)`: `m x d` features, `m x m` structure, measure on nodes.
///
/// Immutable after construction; every constructor checks the invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct MeasureGraph {
    features: Array2<f64>,
    structure: Array2<f64>,
    measure: Array1<f64>,
    label: Option<usize>,
}

impl MeasureGraph {
    pub fn new(
        features: Array2<f64>,
        structure: Array2<f64>,
        measure: Array1<f64>,
        label: Option<usize>,
    ) -> Result<Self> {
        let m = measure.len();
        if m == 0 {
            return Err(Error::Input("graph has no nodes".into()));
        }
        if features.nrows() != m {
            return Err(Error::Shape(format!(
                "features have {} rows, measure has {m} entries",
                features.nrows()
            )));
        }
        if structure.dim() != (m, m) {
            return Err(Error::Shape(format!(
                "structure is {:?}, expected ({m}, {m})",
                structure.dim()
            )));
        }
        if features.iter().chain(structure.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite feature or structure entry".into()));
        }
        if measure.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Input("measure has a negative or non-finite entry".into()));
        }
        let total: f64 = measure.sum();
        if (total - 1.0).abs() > MEASURE_TOL {
            return Err(Error::Input(format!("measure sums to {total}, not 1")));
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let (a, b) = (structure[[i, j]], structure[[j, i]]);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::Input(format!(
                        "structure is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self {
            features,
            structure,
            measure,
            label,
        })
    }

    /// Graph with the uniform measure over its nodes.
    pub fn uniform(features: Array2<f64>, structure: Array2<f64>, label: Option<usize>) -> Result<Self> {
        let m = structure.nrows();
        if m == 0 {
            return Err(Error::Input("graph has no nodes".into()));
        }
        Self::new(features, structure, Array1::from_elem(m, 1.0 / m as f64), label)
    }

    pub fn num_nodes(&self) -> usize {
        self.measure.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn structure(&self) -> ArrayView2<'_, f64> {
        self.structure.view()
    }

    pub fn measure(&self) -> ArrayView1<'_, f64> {
        self.measure.view()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Same structure and measure, new features.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        Self::new(features, self.structure.clone(), self.measure.clone(), self.label)
    }

    /// Same features and measure, new structure matrix.
    pub fn with_structure(&self, structure: Array2<f64>) -> Result<Self> {
        Self::new(self.features.clone(), structure, self.measure.clone(), self.label)
    }

    /// Relabel nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let m = self.num_nodes();
        let mut seen = vec![false; m];
        if perm.len() != m || perm.iter().any(|&p| p >= m || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Input("not a permutation of the node set".into()));
        }
        let features = self.features.select(Axis(0), perm);
        let structure = self.structure.select(Axis(0), perm).select(Axis(1), perm);
        let measure = self.measure.select(Axis(0), perm);
        Self::new(features, structure, measure, self.label)
    }

    /// Edge list `(i, j)` with `i < j` for every nonzero off-diagonal entry.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let m = self.num_nodes();
        let mut out = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                if self.structure[[i, j]] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Continuous Weisfeiler-Lehman propagation.
///
/// Iterates `x_h(v) = (x_{h-1}(v) + mean_{u ~ v} x_{h-1}(u)) / 2` and
/// concatenates `x_0 .. x_H` per node, giving `d * (H + 1)` columns.
/// Neighbours are the nonzero off-diagonal entries of the structure matrix,
/// so this must run while the structure is still the adjacency matrix.
/// An isolated node uses its own feature as the neighbour mean.
pub fn wl_propagate(g: &MeasureGraph, depth: usize) -> Result<MeasureGraph> {
    if depth == 0 {
        return Ok(g.clone());
    }
    let d = g.feature_dim();
    if d == 0 {
        return Err(Error::Input("WL propagation needs at least one feature column".into()));
    }
    let m = g.num_nodes();
    let adj = g.structure();
    let neighbours: Vec<Vec<usize>> = (0..m)
        .map(|v| (0..m).filter(|&u| u != v && adj[[v, u]] != 0.0).collect())
        .collect();

    let mut out = Array2::zeros((m, d * (depth + 1)));
    out.slice_mut(ndarray::s![.., 0..d]).assign(&g.features());
    let mut current = g.features().to_owned();
    for h in 1..=depth {
        let mut next = Array2::zeros((m, d));
        for v in 0..m {
            let mut mean = Array1::<f64>::zeros(d);
            if neighbours[v].is_empty() {
                mean.assign(&current.row(v));
            } else {
                for &u in &neighbours[v] {
                    mean += &current.row(u);
                }
                mean /= neighbours[v].len() as f64;
            }
            let row = (&current.row(v) + &mean) * 0.5;
            next.row_mut(v).assign(&row);
        }
        out.slice_mut(ndarray::s![.., h * d..(h + 1) * d]).assign(&next);
        current = next;
    }
    g.with_features(out)
}

/// `alpha * max ||x_i - x_j||^2 + (1 - alpha) * max |A_ij - A_i'j'|^2`.
///
/// Note the weighting: here alpha multiplies the feature spread, the mirror
/// image of the FGW objective where alpha multiplies the structure term.
pub fn mixing_diameter(g: &MeasureGraph, alpha: f64) -> f64 {
    let x = g.features();
    let m = g.num_nodes();
    let mut feat: f64 = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            feat = feat.max(d2);
        }
    }
    let (lo, hi) = g
        .structure()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let spread = hi - lo;
    alpha * feat + (1.0 - alpha) * spread * spread
}

/// All-pairs hop distances (Floyd-Warshall) from the adjacency pattern.
/// Unreachable pairs get `m`, one more than any finite hop count.
pub fn shortest_path_structure(g: &MeasureGraph) -> Result<MeasureGraph> {
    let m = g.num_nodes();
    let adj = g.structure();
    let unreachable = m as f64;
    let mut dist = Array2::from_elem((m, m), f64::INFINITY);
    for i in 0..m {
        dist[[i, i]] = 0.0;
        for j in 0..m {
            if i != j && adj[[i, j]] != 0.0 {
                dist[[i, j]] = 1.0;
            }
        }
    }
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                let via = dist[[i, k]] + dist[[k, j]];
                if via < dist[[i, j]] {
                    dist[[i, j]] = via;
                }
            }
        }
    }
    dist.mapv_inplace(|v| if v.is_finite() { v } else { unreachable });
    g.with_structure(dist)
}

/// An ordered collection of graphs sharing one feature dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    name: String,
    graphs: Vec<MeasureGraph>,
    num_classes: usize,
}

impl GraphDataset {
    pub fn new(name: impl Into<String>, graphs: Vec<MeasureGraph>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Input("num_classes must be at least 1".into()));
        }
        if let Some(first) = graphs.first() {
            let d = first.feature_dim();
            if let Some((i, g)) = graphs.iter().enumerate().find(|(_, g)| g.feature_dim() != d) {
                return Err(Error::Shape(format!(
                    "graph {i} has feature dimension {}, expected {d}",
                    g.feature_dim()
                )));
            }
        }
        if let Some((i, l)) = graphs
            .iter()
            .enumerate()
            .find_map(|(i, g)| g.label().filter(|&l| l >= num_classes).map(|l| (i, l)))
        {
            return Err(Error::Input(format!(
                "graph {i} has label {l} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            name: name.into(),
            graphs,
            num_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graphs(&self) -> &[MeasureGraph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, MeasureGraph::feature_dim)
    }

    /// Labels of every graph, or `None` if any graph is unlabeled.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.graphs.iter().map(MeasureGraph::label).collect()
    }

    /// Apply a per-graph transform, keeping name and class count.
    pub fn map_graphs<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&MeasureGraph) -> Result<MeasureGraph> + Sync + Send,
    {
        use rayon::prelude::*;
        let graphs = self.graphs.par_iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(self.name.clone(), graphs, self.num_classes)
    }

    pub fn wl_propagate(&self, depth: usize) -> Result<Self> {
        self.map_graphs(|g| wl_propagate(g, depth))
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    features: Vec<Vec<f64>>,
    structure: Vec<Vec<f64>>,
    measure: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

impl From<MeasureGraph> for GraphRepr {
    fn from(g: MeasureGraph) -> Self {
        let rows = |a: &Array2<f64>| a.outer_iter().map(|r| r.to_vec()).collect();
        GraphRepr {
            features: rows(&g.features),
            structure: rows(&g.structure),
            measure: g.measure.to_vec(),
            label: g.label,
        }
    }
}

impl TryFrom<GraphRepr> for MeasureGraph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        let m = r.measure.len();
        let features = rows_to_array(&r.features, m, "features")?;
        let structure = rows_to_array(&r.structure, m, "structure")?;
        MeasureGraph::new(features, structure, Array1::from(r.measure), r.label)
    }
}

pub(crate) fn rows_to_array(rows: &[Vec<f64>], expected_rows: usize, what: &str) -> Result<Array2<f64>> {
    if rows.len() != expected_rows {
        return Err(Error::Shape(format!(
            "{what} has {} rows, expected {expected_rows}",
            rows.len()
        )));
    }
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Shape(format!("{what} rows have unequal lengths")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((expected_rows, width), flat).map_err(|e| Error::Shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path3() -> MeasureGraph {
        let adj = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        MeasureGraph::uniform(array![[0.0], [2.0], [4.0]], adj, None).unwrap()
    }

    #[test]
    fn rejects_bad_measure() {
        let err = MeasureGraph::new(array![[0.0], [1.0]], Array2::zeros((2, 2)), array![0.7, 0.7], None);
        assert!(matches!(err, Err(Error::Input(_))));
        let err = MeasureGraph::new(array![[0.0], [1.0]], Array2::zeros((2, 2)), array![1.5, -0.5], None);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_asymmetric_structure() {
        let err = MeasureGraph::uniform(array![[0.0], [1.0]], array![[0.0, 1.0], [0.0, 0.0]], None);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_feature_row_mismatch() {
        let err = MeasureGraph::uniform(array![[0.0]], Array2::zeros((2, 2)), None);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn zero_width_features_allowed() {
        let g = MeasureGraph::uniform(Array2::zeros((3, 0)), Array2::zeros((3, 3)), None).unwrap();
        assert_eq!(g.feature_dim(), 0);
    }

    #[test]
    fn wl_depth_zero_is_identity() {
        let g = path3();
        assert_eq!(wl_propagate(&g, 0).unwrap(), g);
    }

    #[test]
    fn wl_path_graph_hand_computed() {
        let out = wl_propagate(&path3(), 1).unwrap();
        assert_eq!(out.features(), array![[0.0, 1.0], [2.0, 2.0], [4.0, 3.0]]);
        assert_eq!(out.structure(), path3().structure());
    }

    #[test]
    fn wl_output_width() {
        let adj = array![[0.0, 1.0], [1.0, 0.0]];
        let g = MeasureGraph::uniform(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], adj, None).unwrap();
        assert_eq!(wl_propagate(&g, 2).unwrap().feature_dim(), 9);
    }

    #[test]
    fn wl_isolated_node_keeps_feature() {
        let g = MeasureGraph::uniform(array![[3.0], [5.0]], Array2::zeros((2, 2)), None).unwrap();
        let out = wl_propagate(&g, 2).unwrap();
        assert_eq!(out.features(), array![[3.0, 3.0, 3.0], [5.0, 5.0, 5.0]]);
    }

    #[test]
    fn diameter_single_node() {
        let g = MeasureGraph::uniform(array![[7.0]], array![[0.0]], None).unwrap();
        for alpha in [0.0, 0.3, 1.0] {
            assert_eq!(mixing_diameter(&g, alpha), 0.0);
        }
    }

    #[test]
    fn diameter_two_nodes() {
        let g = MeasureGraph::uniform(array![[0.0], [3.0]], array![[0.0, 1.0], [1.0, 0.0]], None).unwrap();
        assert_eq!(mixing_diameter(&g, 0.5), 5.0);
        assert_eq!(mixing_diameter(&g, 0.0), 1.0);
    }

    #[test]
    fn shortest_paths_on_path() {
        let sp = shortest_path_structure(&path3()).unwrap();
        assert_eq!(sp.structure(), array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]);
    }

    #[test]
    fn json_roundtrip() {
        let g = path3().with_label(Some(1));
        let s = serde_json::to_string(&g).unwrap();
        let back: MeasureGraph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn dataset_rejects_mixed_dims() {
        let a = path3();
        let b = MeasureGraph::uniform(array![[0.0, 1.0]], array![[0.0]], None).unwrap();
        assert!(GraphDataset::new("x", vec![a, b], 1).is_err());
    }

    #[test]
    fn dataset_rejects_out_of_range_label() {
        let a = path3().with_label(Some(2));
        assert!(GraphDataset::new("x", vec![a], 2).is_err());
    }
}
