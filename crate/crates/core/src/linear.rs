//! Barycentric projections onto a fixed reference graph and the linearFGW
//! distance between the resulting surrogate graphs.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphDataset, MeasureGraph};
use crate::io::graph_hash;
use crate::ot::{solve_fgw, SolverConfig, TransportPlan};

/// The image of a graph on the reference nodes under a transport plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGraph {
    projected_features: Array2<f64>,
    projected_structure: Array2<f64>,
    reference_measure: Array1<f64>,
}

impl SurrogateGraph {
    pub fn projected_features(&self) -> &Array2<f64> {
        &self.projected_features
    }

    pub fn projected_structure(&self) -> &Array2<f64> {
        &self.projected_structure
    }

    pub fn reference_measure(&self) -> ArrayView1<'_, f64> {
        self.reference_measure.view()
    }

    pub fn num_nodes(&self) -> usize {
        self.reference_measure.len()
    }

    /// The surrogate as a measure graph carrying the reference measure.
    pub fn to_measure_graph(&self) -> Result<MeasureGraph> {
        MeasureGraph::new(
            self.projected_features.clone(),
            self.projected_structure.clone(),
            self.reference_measure.clone(),
            None,
        )
    }
}

/// `Z~ = diag(1/sigma) pi X` and `C~ = diag(1/sigma) pi A pi^T diag(1/sigma)`
/// for a plan from `reference` (K nodes) to `source` (m nodes).
pub fn barycentric_project(
    reference: &MeasureGraph,
    source: &MeasureGraph,
    plan: &TransportPlan,
) -> Result<SurrogateGraph> {
    let pi = plan.coupling();
    let (k, m) = (reference.num_nodes(), source.num_nodes());
    if pi.dim() != (k, m) {
        return Err(Error::Shape(format!(
            "plan is {:?}, expected {k}x{m} from reference to source",
            pi.dim()
        )));
    }
    let sigma = reference.measure();
    if let Some(node) = sigma.iter().position(|&s| s <= 0.0) {
        return Err(Error::DegenerateReference { node });
    }
    let mut features = pi.dot(&source.features());
    for (mut row, &s) in features.outer_iter_mut().zip(sigma) {
        row /= s;
    }
    let mut structure = pi.dot(&source.structure()).dot(&pi.t());
    for ((a, b), v) in structure.indexed_iter_mut() {
        *v /= sigma[a] * sigma[b];
    }
    // pi A pi^T is symmetric in exact arithmetic; remove the rounding skew
    let sym = (&structure + &structure.t()) * 0.5;
    Ok(SurrogateGraph {
        projected_features: features,
        projected_structure: sym,
        reference_measure: sigma.to_owned(),
    })
}

/// Node and edge blocks of a surrogate graph, scaled by `sqrt(1 - alpha)`
/// and `sqrt(alpha)`. Both blocks are stored without measure weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEmbedding {
    /// K x d projected features, row-major.
    pub node_block: Array1<f64>,
    /// K x K projected structure, row-major.
    pub edge_block: Array1<f64>,
    pub alpha: f64,
    pub reference_id: String,
    pub feature_dim: usize,
}

impl GraphEmbedding {
    pub fn from_surrogate(surrogate: &SurrogateGraph, alpha: f64, reference_id: impl Into<String>) -> Self {
        let (wn, we) = ((1.0 - alpha).sqrt(), alpha.sqrt());
        let node_block = surrogate.projected_features.iter().map(|v| wn * v).collect();
        let edge_block = surrogate.projected_structure.iter().map(|v| we * v).collect();
        Self {
            node_block,
            edge_block,
            alpha,
            reference_id: reference_id.into(),
            feature_dim: surrogate.projected_features.ncols(),
        }
    }

    pub fn num_reference_nodes(&self) -> usize {
        (self.edge_block.len() as f64).sqrt().round() as usize
    }

    pub fn len(&self) -> usize {
        self.node_block.len() + self.edge_block.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node block followed by edge block.
    pub fn concatenated(&self) -> Array1<f64> {
        self.node_block.iter().chain(self.edge_block.iter()).copied().collect()
    }

    /// Flat vector with node rows scaled by `sqrt(sigma_k)` and edge entries
    /// by `sqrt(sigma_k sigma_l)`: plain squared Euclidean distances between
    /// these vectors are linearFGW distances.
    pub fn weighted_flat(&self, sigma: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_sigma(sigma)?;
        let d = self.feature_dim;
        let k = sigma.len();
        let mut out = Array1::zeros(self.len());
        for (idx, v) in self.node_block.iter().enumerate() {
            out[idx] = sigma[idx / d.max(1)].sqrt() * v;
        }
        let off = self.node_block.len();
        for (idx, v) in self.edge_block.iter().enumerate() {
            out[off + idx] = (sigma[idx / k] * sigma[idx % k]).sqrt() * v;
        }
        Ok(out)
    }

    fn check_sigma(&self, sigma: ArrayView1<'_, f64>) -> Result<()> {
        let k = sigma.len();
        if self.edge_block.len() != k * k || self.node_block.len() != k * self.feature_dim {
            return Err(Error::Shape(format!(
                "embedding blocks ({}, {}) do not fit a {k}-node reference with d = {}",
                self.node_block.len(),
                self.edge_block.len(),
                self.feature_dim
            )));
        }
        Ok(())
    }
}

/// Solve FGW from the reference to `g` and embed the surrogate graph.
pub fn embed(reference: &MeasureGraph, g: &MeasureGraph, cfg: &SolverConfig) -> Result<GraphEmbedding> {
    embed_with_id(reference, &graph_hash(reference), g, cfg)
}

fn embed_with_id(reference: &MeasureGraph, id: &str, g: &MeasureGraph, cfg: &SolverConfig) -> Result<GraphEmbedding> {
    let plan = solve_fgw(reference, g, cfg)?.plan;
    let surrogate = barycentric_project(reference, g, &plan)?;
    Ok(GraphEmbedding::from_surrogate(&surrogate, cfg.alpha, id))
}

/// Embeddings of every graph of a dataset, in dataset order.
pub fn embed_dataset(dataset: &GraphDataset, reference: &MeasureGraph, cfg: &SolverConfig) -> Result<Vec<GraphEmbedding>> {
    let id = graph_hash(reference);
    dataset
        .graphs()
        .par_iter()
        .map(|g| embed_with_id(reference, &id, g, cfg))
        .collect()
}

/// `(1-a) sum_k sigma_k |dz_k|^2 + a sum_kl sigma_k sigma_l |dC_kl|^2`,
/// evaluated on the scaled blocks.
pub fn linear_fgw_distance(e1: &GraphEmbedding, e2: &GraphEmbedding, sigma: ArrayView1<'_, f64>) -> Result<f64> {
    if e1.reference_id != e2.reference_id {
        return Err(Error::Usage("embeddings were computed against different references".into()));
    }
    if e1.alpha != e2.alpha {
        return Err(Error::Usage(format!(
            "embeddings use different alpha ({} vs {})",
            e1.alpha, e2.alpha
        )));
    }
    e1.check_sigma(sigma)?;
    e2.check_sigma(sigma)?;
    let d = e1.feature_dim;
    let k = sigma.len();
    let mut node = 0.0;
    if d > 0 {
        for (kk, (a, b)) in e1
            .node_block
            .exact_chunks(d)
            .into_iter()
            .zip(e2.node_block.exact_chunks(d))
            .enumerate()
        {
            let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            node += sigma[kk] * sq;
        }
    }
    let mut edge = 0.0;
    for (idx, (x, y)) in e1.edge_block.iter().zip(e2.edge_block.iter()).enumerate() {
        edge += sigma[idx / k] * sigma[idx % k] * (x - y) * (x - y);
    }
    Ok(node + edge)
}

/// Symmetric matrix of linearFGW distances between embeddings.
pub fn distance_matrix(embeddings: &[GraphEmbedding], sigma: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
    let n = embeddings.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| linear_fgw_distance(&embeddings[i], &embeddings[j], sigma))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(out)
}

/// N embeddings against `reference` followed by all N^2 linearFGW distances.
pub fn pairwise_linear_fgw(dataset: &GraphDataset, reference: &MeasureGraph, cfg: &SolverConfig) -> Result<Array2<f64>> {
    let embeddings = embed_dataset(dataset, reference, cfg)?;
    distance_matrix(&embeddings, reference.measure())
}

/// Full pairwise FGW matrix, one solve per unordered pair.
pub fn pairwise_fgw(dataset: &GraphDataset, cfg: &SolverConfig) -> Result<Array2<f64>> {
    let graphs = dataset.graphs();
    let n = graphs.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| solve_fgw(&graphs[i], &graphs[j], cfg).map(|r| r.value))
        .collect::<Result<Vec<f64>>>()?;
    let mut out = Array2::zeros((n, n));
    for (&(i, j), v) in pairs.iter().zip(values) {
        out[[i, j]] = v;
        out[[j, i]] = v;
    }
    Ok(out)
}

/// `sum_k (1-a) sigma_k |z_k - z~_k|^2 + sum_kl a sigma_k sigma_l |C_kl - C~_kl|^2`:
/// the FGW objective of the diagonal plan between a reference and a
/// surrogate built on it.
pub fn diagonal_objective(reference: &MeasureGraph, surrogate: &SurrogateGraph, alpha: f64) -> Result<f64> {
    let sigma = reference.measure();
    if surrogate.num_nodes() != sigma.len() || surrogate.projected_features.ncols() != reference.feature_dim() {
        return Err(Error::Shape("surrogate does not match the reference".into()));
    }
    let dz = &reference.features() - &surrogate.projected_features;
    let node: f64 = dz
        .axis_iter(Axis(0))
        .zip(sigma)
        .map(|(row, s)| s * row.dot(&row))
        .sum();
    let dc = &reference.structure() - &surrogate.projected_structure;
    let edge: f64 = dc.indexed_iter().map(|((k, l), v)| sigma[k] * sigma[l] * v * v).sum();
    Ok((1.0 - alpha) * node + alpha * edge)
}
