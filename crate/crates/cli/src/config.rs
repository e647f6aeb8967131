use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use linfgw::barycenter::{BarycenterConfig, BarycenterInit};
use linfgw::cv::{CvConfig, ParamGrid};
use linfgw::ot::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DATA_ROOT_ENV: &str = "LFGW_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StructureKind {
    Adjacency,
    ShortestPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceKind {
    Linear,
    Fgw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    FeatureKmeans,
    RandomSampleGraph,
}

/// Every knob of a run. Serialized verbatim into each output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// A dataset JSON file, or a directory holding TU-format files.
    pub dataset: Option<PathBuf>,
    /// TU dataset name (file prefix) when `dataset` is a directory.
    pub name: Option<String>,
    pub structure: StructureKind,
    pub wl_depth: usize,
    pub alpha: Option<f64>,
    pub eta: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub sinkhorn_tol: f64,
    pub barycenter_nodes: Option<usize>,
    pub barycenter_iters: usize,
    pub barycenter_tol: f64,
    pub barycenter_init: InitKind,
    /// Reuse a saved reference graph instead of computing a barycenter.
    pub reference: Option<PathBuf>,
    pub distance: DistanceKind,
    pub gamma: f64,
    pub gamma_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub depth_grid: Vec<usize>,
    pub folds: usize,
    pub repeats: usize,
    pub inner_folds: usize,
    pub clusters: Option<usize>,
    /// Unset means 0, except `verify`, which defaults to 7.
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output: PathBuf,
    pub trials: usize,
    pub max_nodes: usize,
    pub tol: Option<f64>,
    pub identical: bool,
    pub per_class: usize,
    pub min_nodes: usize,
    pub max_graph_nodes: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let grid = ParamGrid::default();
        Self {
            dataset: None,
            name: None,
            structure: StructureKind::Adjacency,
            wl_depth: 0,
            alpha: None,
            eta: 0.1,
            outer_iters: 5,
            inner_iters: 50,
            sinkhorn_tol: 1e-9,
            barycenter_nodes: None,
            barycenter_iters: 10,
            barycenter_tol: 1e-5,
            barycenter_init: InitKind::FeatureKmeans,
            reference: None,
            distance: DistanceKind::Linear,
            gamma: 0.01,
            gamma_grid: grid.gamma,
            c_grid: grid.c,
            alpha_grid: vec![0.0, 0.3, 0.5, 0.7, 0.9, 1.0],
            depth_grid: vec![1, 2],
            folds: 10,
            repeats: 10,
            inner_folds: 5,
            clusters: None,
            seed: None,
            threads: None,
            output: PathBuf::from("out"),
            trials: 100,
            max_nodes: 4,
            tol: None,
            identical: false,
            per_class: 60,
            min_nodes: 10,
            max_graph_nodes: 20,
        }
    }
}

/// Command-line values; anything given here beats the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Dataset JSON file or TU directory
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// TU dataset name inside the dataset directory
    #[arg(long, global = true)]
    pub name: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub structure: Option<StructureKind>,
    /// WL propagation depth H
    #[arg(long, global = true)]
    pub wl_depth: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub outer_iters: Option<usize>,
    #[arg(long, global = true)]
    pub inner_iters: Option<usize>,
    #[arg(long, global = true)]
    pub sinkhorn_tol: Option<f64>,
    /// Reference size K (default: median node count)
    #[arg(long, global = true)]
    pub barycenter_nodes: Option<usize>,
    #[arg(long, global = true)]
    pub barycenter_iters: Option<usize>,
    #[arg(long, global = true)]
    pub barycenter_tol: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub barycenter_init: Option<InitKind>,
    /// Saved reference graph (JSON) to embed against
    #[arg(long, global = true)]
    pub reference: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub distance: Option<DistanceKind>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub gamma_grid: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub depth_grid: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    #[arg(long, global = true)]
    pub inner_folds: Option<usize>,
    /// Number of clusters (default: number of classes)
    #[arg(long, global = true)]
    pub clusters: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Randomized instances for `verify`
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Largest graph size for `verify`
    #[arg(long, global = true)]
    pub max_nodes: Option<usize>,
    /// Slack for `verify` (absolute for the surrogate check, relative for the bound)
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// `verify` with every graph equal to the reference
    #[arg(long, global = true)]
    pub identical: bool,
    /// Graphs per class for `synth`
    #[arg(long, global = true)]
    pub per_class: Option<usize>,
    #[arg(long, global = true)]
    pub min_nodes: Option<usize>,
    #[arg(long, global = true)]
    pub max_graph_nodes: Option<usize>,
}

macro_rules! take {
    ($cfg:ident, $o:ident, $($field:ident),*) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
    };
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", p.display())))?
            }
            None => PipelineConfig::default(),
        };
        let o = overrides;
        take!(cfg, o, structure, wl_depth, eta, outer_iters, inner_iters, sinkhorn_tol, barycenter_iters);
        take!(cfg, o, barycenter_tol, barycenter_init, distance, gamma, gamma_grid, c_grid, alpha_grid);
        take!(cfg, o, depth_grid, folds, repeats, inner_folds, output, trials, max_nodes);
        take!(cfg, o, per_class, min_nodes, max_graph_nodes);
        if o.dataset.is_some() {
            cfg.dataset = o.dataset.clone();
        }
        if o.name.is_some() {
            cfg.name = o.name.clone();
        }
        if o.alpha.is_some() {
            cfg.alpha = o.alpha;
        }
        if o.barycenter_nodes.is_some() {
            cfg.barycenter_nodes = o.barycenter_nodes;
        }
        if o.reference.is_some() {
            cfg.reference = o.reference.clone();
        }
        if o.clusters.is_some() {
            cfg.clusters = o.clusters;
        }
        if o.seed.is_some() {
            cfg.seed = o.seed;
        }
        if o.threads.is_some() {
            cfg.threads = o.threads;
        }
        if o.tol.is_some() {
            cfg.tol = o.tol;
        }
        cfg.identical |= o.identical;
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn require_alpha(&self) -> Result<f64, CliError> {
        let alpha = self.alpha.ok_or_else(|| CliError::usage("--alpha is required for this command".into()))?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CliError::usage(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(alpha)
    }

    pub fn solver(&self, alpha: f64) -> Result<SolverConfig, CliError> {
        let cfg = SolverConfig {
            alpha,
            eta: self.eta,
            outer_iters: self.outer_iters,
            inner_sinkhorn_iters: self.inner_iters,
            sinkhorn_tol: self.sinkhorn_tol,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn barycenter(&self) -> BarycenterConfig {
        BarycenterConfig {
            num_nodes: self.barycenter_nodes,
            outer_iters: self.barycenter_iters,
            tol: self.barycenter_tol,
            init: match self.barycenter_init {
                InitKind::FeatureKmeans => BarycenterInit::FeatureKmeans,
                InitKind::RandomSampleGraph => BarycenterInit::RandomSampleGraph,
            },
            seed: self.seed(),
        }
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            folds: self.folds,
            repeats: self.repeats,
            inner_folds: self.inner_folds,
            seed: self.seed(),
            ..CvConfig::default()
        }
    }

    pub fn grid(&self) -> ParamGrid {
        ParamGrid {
            c: self.c_grid.clone(),
            gamma: self.gamma_grid.clone(),
        }
    }

    /// Where the dataset lives: the explicit path, or `$LFGW_DATA_ROOT` when
    /// only a TU name is given.
    pub fn dataset_path(&self) -> Result<PathBuf, CliError> {
        if let Some(p) = &self.dataset {
            return Ok(p.clone());
        }
        match (&self.name, std::env::var_os(DATA_ROOT_ENV)) {
            (Some(_), Some(root)) => Ok(PathBuf::from(root)),
            _ => Err(CliError::usage(format!(
                "no dataset given: pass --dataset, or --name with {DATA_ROOT_ENV} set"
            ))),
        }
    }
}
