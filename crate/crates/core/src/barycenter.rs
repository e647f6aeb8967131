//! FGW barycenter of a dataset, used as the reference graph for embeddings.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::kmeans;
use crate::error::{Error, Result};
use crate::graph::{GraphDataset, MeasureGraph};
use crate::linear::barycentric_project;
use crate::ot::{evaluate_fgw_objective, solve_fgw, FgwResult, SolverConfig, TransportPlan};

/// How the barycenter is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarycenterInit {
    /// A dataset graph resampled to K nodes.
    RandomSampleGraph,
    /// k-means centroids of the pooled node features; structure projected
    /// from a dataset graph under a feature-only plan.
    FeatureKmeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarycenterConfig {
    /// Reference size K; `None` uses the median node count of the dataset.
    pub num_nodes: Option<usize>,
    pub outer_iters: usize,
    /// Stop once the objective drops by less than this fraction.
    pub tol: f64,
    pub init: BarycenterInit,
    pub seed: u64,
}

impl Default for BarycenterConfig {
    fn default() -> Self {
        Self {
            num_nodes: None,
            outer_iters: 10,
            tol: 1e-5,
            init: BarycenterInit::FeatureKmeans,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Barycenter {
    pub graph: MeasureGraph,
    /// Objective `sum_i FGW(G_i, barycenter)` at the initial reference and
    /// after each update, under the plans kept by the descent.
    pub history: Vec<f64>,
}

/// Median node count (lower median for even sizes).
pub fn median_node_count(dataset: &GraphDataset) -> usize {
    let mut sizes: Vec<usize> = dataset.graphs().iter().map(MeasureGraph::num_nodes).collect();
    sizes.sort_unstable();
    sizes.get(sizes.len().saturating_sub(1) / 2).copied().unwrap_or(1)
}

/// `sum_i FGW(G_i, reference)`, summed in dataset order.
pub fn barycenter_objective(reference: &MeasureGraph, dataset: &GraphDataset, cfg: &SolverConfig) -> Result<f64> {
    let values = dataset
        .graphs()
        .par_iter()
        .map(|g| solve_fgw(g, reference, cfg).map(|r| r.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum())
}

/// Block-coordinate descent on the FGW barycenter with uniform measure and
/// uniform dataset weights.
///
/// Each round solves the plans from the current barycenter to every graph,
/// then replaces features and structure by the average of the barycentric
/// projections. A graph whose new plan scores worse than its previous plan
/// under the updated barycenter keeps the previous one, so `history` is
/// non-increasing.
pub fn compute_barycenter(dataset: &GraphDataset, cfg_b: &BarycenterConfig, cfg_s: &SolverConfig) -> Result<Barycenter> {
    if dataset.is_empty() {
        return Err(Error::Usage("cannot average an empty dataset".into()));
    }
    if cfg_b.outer_iters == 0 || !(cfg_b.tol > 0.0) {
        return Err(Error::Usage("barycenter needs outer_iters >= 1 and tol > 0".into()));
    }
    cfg_s.validate()?;
    let k = cfg_b.num_nodes.unwrap_or_else(|| median_node_count(dataset));
    if k == 0 {
        return Err(Error::Usage("barycenter size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg_b.seed);
    let mut bary = match cfg_b.init {
        BarycenterInit::FeatureKmeans if dataset.feature_dim() > 0 => kmeans_init(dataset, k, cfg_s, &mut rng)?,
        _ => resampled_graph(&dataset.graphs()[rng.random_range(0..dataset.len())], k)?,
    };

    let mut plans: Vec<FgwResult> = solve_all(&bary, dataset, cfg_s)?;
    let mut history = vec![plans.iter().map(|r| r.value).sum::<f64>()];
    for _ in 0..cfg_b.outer_iters {
        bary = averaged(&bary, dataset, &plans)?;
        let fresh = solve_all(&bary, dataset, cfg_s)?;
        plans = fresh
            .into_iter()
            .zip(plans)
            .zip(dataset.graphs())
            .map(|((new, old), g)| {
                let old_value = evaluate_fgw_objective(&bary, g, &old.plan, cfg_s.alpha)?;
                Ok(if old_value < new.value {
                    FgwResult {
                        value: old_value,
                        ..old
                    }
                } else {
                    new
                })
            })
            .collect::<Result<_>>()?;
        let objective: f64 = plans.iter().map(|r| r.value).sum();
        let previous = *history.last().expect("history starts non-empty");
        log::info!("barycenter objective {objective:.6e}");
        history.push(objective);
        if previous - objective <= cfg_b.tol * previous.abs() {
            break;
        }
    }
    Ok(Barycenter { graph: bary, history })
}

fn solve_all(bary: &MeasureGraph, dataset: &GraphDataset, cfg: &SolverConfig) -> Result<Vec<FgwResult>> {
    dataset.graphs().par_iter().map(|g| solve_fgw(bary, g, cfg)).collect()
}

/// Average of the surrogate graphs of every dataset graph under `plans`.
pub fn averaged(bary: &MeasureGraph, dataset: &GraphDataset, plans: &[FgwResult]) -> Result<MeasureGraph> {
    let w = 1.0 / dataset.len() as f64;
    let k = bary.num_nodes();
    let mut features = Array2::zeros((k, bary.feature_dim()));
    let mut structure = Array2::zeros((k, k));
    for (g, r) in dataset.graphs().iter().zip(plans) {
        let s = barycentric_project(bary, g, &r.plan)?;
        features.scaled_add(w, s.projected_features());
        structure.scaled_add(w, s.projected_structure());
    }
    MeasureGraph::new(features, structure, bary.measure().to_owned(), None)
}

fn uniform(k: usize) -> Array1<f64> {
    Array1::from_elem(k, 1.0 / k as f64)
}

/// Node `k` of the result copies node `floor(k m / K)` of `g`.
fn resampled_graph(g: &MeasureGraph, k: usize) -> Result<MeasureGraph> {
    let m = g.num_nodes();
    let pick = |i: usize| i * m / k;
    let x = g.features();
    let a = g.structure();
    let features = Array2::from_shape_fn((k, g.feature_dim()), |(i, c)| x[[pick(i), c]]);
    let structure = Array2::from_shape_fn((k, k), |(i, j)| a[[pick(i), pick(j)]]);
    MeasureGraph::new(features, structure, uniform(k), None)
}

fn kmeans_init(dataset: &GraphDataset, k: usize, cfg: &SolverConfig, rng: &mut ChaCha8Rng) -> Result<MeasureGraph> {
    let d = dataset.feature_dim();
    let total: usize = dataset.graphs().iter().map(MeasureGraph::num_nodes).sum();
    let mut pooled = Array2::zeros((total, d));
    let mut row = 0;
    for g in dataset.graphs() {
        let m = g.num_nodes();
        pooled.slice_mut(ndarray::s![row..row + m, ..]).assign(&g.features());
        row += m;
    }
    let centroids = if k <= total {
        kmeans(pooled.view(), k, 10, rng.random())?.centroids
    } else {
        // more reference nodes than pooled nodes: cycle through them
        Array2::from_shape_fn((k, d), |(i, c)| pooled[[i % total, c]])
    };
    let start = MeasureGraph::new(centroids, Array2::zeros((k, k)), uniform(k), None)?;
    let g = &dataset.graphs()[rng.random_range(0..dataset.len())];
    let plan: TransportPlan = solve_fgw(&start, g, &cfg.with_alpha(0.0))?.plan;
    let s = barycentric_project(&start, g, &plan)?;
    start.with_structure(s.projected_structure().clone())
}
