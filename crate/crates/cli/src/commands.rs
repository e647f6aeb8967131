use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use linfgw::barycenter::compute_barycenter;
use linfgw::cluster::{adjusted_rand_index, best_permutation_accuracy, kmeans_embeddings, spectral_clustering};
use linfgw::cv::{cross_validate, Candidate};
use linfgw::export::{embeddings_csv, matrix_csv, write_gram, write_json, EmbeddingSidecar};
use linfgw::graph::shortest_path_structure;
use linfgw::io::{content_hash, dataset_to_json, graph_hash, load_dataset_json, load_graph_json, load_tu_dataset, save_dataset_json, save_graph_json};
use linfgw::kernel::{gram_from_distances, GramMatrix, KernelSource};
use linfgw::lemma::{check_lemma1, check_lemma2, Lemma1Report, Lemma2Report};
use linfgw::linear::{distance_matrix, embed_dataset, pairwise_fgw, GraphEmbedding};
use linfgw::ot::SolverConfig;
use linfgw::synthetic::{dense_vs_sparse, erdos_renyi};
use linfgw::{GraphDataset, MeasureGraph};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{DistanceKind, PipelineConfig, StructureKind};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct Provenance<'a> {
    version: &'static str,
    config: &'a PipelineConfig,
    input_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_hash: Option<String>,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    provenance: Provenance<'a>,
    #[serde(flatten)]
    body: T,
}

struct Input {
    dataset: GraphDataset,
    hash: String,
}

impl Input {
    fn load(cfg: &PipelineConfig) -> Result<Self> {
        let path = cfg.dataset_path()?;
        if !path.exists() {
            return Err(CliError::usage(format!("dataset path {} does not exist", path.display())));
        }
        let dataset = if path.is_dir() {
            let name = cfg
                .name
                .as_deref()
                .ok_or_else(|| CliError::usage(format!("{} is a directory; pass --name", path.display())))?;
            load_tu_dataset(&path, name)?
        } else {
            load_dataset_json(&path)?
        };
        let hash = content_hash(dataset_to_json(&dataset)?.as_bytes());
        log::info!("loaded {} graphs from {}", dataset.len(), path.display());
        Ok(Self { dataset, hash })
    }

    /// WL propagation runs on the adjacency, before any structure change.
    fn prepared(&self, cfg: &PipelineConfig, depth: usize) -> Result<GraphDataset> {
        let propagated = self.dataset.wl_propagate(depth)?;
        Ok(match cfg.structure {
            StructureKind::Adjacency => propagated,
            StructureKind::ShortestPath => propagated.map_graphs(shortest_path_structure)?,
        })
    }

    fn provenance<'a>(&self, cfg: &'a PipelineConfig, reference: Option<&MeasureGraph>) -> Provenance<'a> {
        Provenance {
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            input_hash: self.hash.clone(),
            reference_hash: reference.map(graph_hash),
        }
    }
}

fn output(cfg: &PipelineConfig, file: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output).map_err(|e| CliError::usage(format!("cannot create {}: {e}", cfg.output.display())))?;
    Ok(cfg.output.join(file))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

/// The saved reference if one is configured, else a fresh barycenter and
/// its objective history.
fn reference(cfg: &PipelineConfig, dataset: &GraphDataset, solver: &SolverConfig) -> Result<(MeasureGraph, Vec<f64>)> {
    if let Some(path) = &cfg.reference {
        let r = load_graph_json(path)?;
        if r.feature_dim() != dataset.feature_dim() {
            return Err(CliError::usage(format!(
                "reference {} has {} feature columns, dataset has {}",
                path.display(),
                r.feature_dim(),
                dataset.feature_dim()
            )));
        }
        return Ok((r, Vec::new()));
    }
    let b = compute_barycenter(dataset, &cfg.barycenter(), solver)?;
    Ok((b.graph, b.history))
}

fn embeddings(cfg: &PipelineConfig, dataset: &GraphDataset, alpha: f64) -> Result<(MeasureGraph, Vec<f64>, Vec<GraphEmbedding>)> {
    let solver = cfg.solver(alpha)?;
    let (r, history) = reference(cfg, dataset, &solver)?;
    let e = embed_dataset(dataset, &r, &solver)?;
    Ok((r, history, e))
}

fn distances(cfg: &PipelineConfig, dataset: &GraphDataset, alpha: f64) -> Result<(Array2<f64>, KernelSource, Option<MeasureGraph>)> {
    Ok(match cfg.distance {
        DistanceKind::Linear => {
            let (r, _, e) = embeddings(cfg, dataset, alpha)?;
            (distance_matrix(&e, r.measure())?, KernelSource::LinearFgw, Some(r))
        }
        DistanceKind::Fgw => (pairwise_fgw(dataset, &cfg.solver(alpha)?)?, KernelSource::Fgw, None),
    })
}

pub fn synth(cfg: &PipelineConfig) -> Result<()> {
    let ds = dense_vs_sparse(cfg.per_class, cfg.min_nodes, cfg.max_graph_nodes, cfg.seed())?;
    let path = output(cfg, "dataset.json")?;
    save_dataset_json(&ds, &path)?;
    println!("wrote {} graphs to {}", ds.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct BarycenterBody {
    num_nodes: usize,
    history: Vec<f64>,
}

pub fn barycenter(cfg: &PipelineConfig) -> Result<()> {
    let input = Input::load(cfg)?;
    let alpha = cfg.require_alpha()?;
    let ds = input.prepared(cfg, cfg.wl_depth)?;
    let b = compute_barycenter(&ds, &cfg.barycenter(), &cfg.solver(alpha)?)?;
    let path = output(cfg, "reference.json")?;
    save_graph_json(&b.graph, &path)?;
    let report = Report {
        provenance: input.provenance(cfg, Some(&b.graph)),
        body: BarycenterBody {
            num_nodes: b.graph.num_nodes(),
            history: b.history.clone(),
        },
    };
    write_json(output(cfg, "barycenter.json")?, &report)?;
    println!("reference {} ({} nodes)", graph_hash(&b.graph), b.graph.num_nodes());
    println!("objective {:.6e}", b.history.last().copied().unwrap_or(0.0));
    Ok(())
}

#[derive(Serialize)]
struct EmbedBody {
    #[serde(flatten)]
    sidecar: EmbeddingSidecar,
    barycenter_history: Vec<f64>,
}

pub fn embed(cfg: &PipelineConfig) -> Result<()> {
    let input = Input::load(cfg)?;
    let alpha = cfg.require_alpha()?;
    let ds = input.prepared(cfg, cfg.wl_depth)?;
    let (r, history, e) = embeddings(cfg, &ds, alpha)?;
    let labels: Vec<Option<usize>> = ds.graphs().iter().map(MeasureGraph::label).collect();
    let csv = output(cfg, "embeddings.csv")?;
    write_text(&csv, &embeddings_csv(&e, &labels)?)?;
    if cfg.reference.is_none() {
        save_graph_json(&r, output(cfg, "reference.json")?)?;
    }
    let body = EmbedBody {
        sidecar: EmbeddingSidecar {
            num_reference_nodes: r.num_nodes(),
            feature_dim: r.feature_dim(),
            alpha,
            eta: cfg.eta,
            outer_iters: cfg.outer_iters,
            reference_hash: graph_hash(&r),
            rows: e.len(),
        },
        barycenter_history: history,
    };
    write_json(csv.with_extension("json"), &Report {
        provenance: input.provenance(cfg, Some(&r)),
        body,
    })?;
    println!("wrote {} embeddings of length {} to {}", e.len(), e.first().map_or(0, GraphEmbedding::len), csv.display());
    Ok(())
}

#[derive(Serialize)]
struct GramBody {
    n: usize,
    gamma: f64,
    source: KernelSource,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
    psd: bool,
    clipped: bool,
}

pub fn gram(cfg: &PipelineConfig) -> Result<()> {
    let input = Input::load(cfg)?;
    let alpha = cfg.require_alpha()?;
    let ds = input.prepared(cfg, cfg.wl_depth)?;
    let (d, source, r) = distances(cfg, &ds, alpha)?;
    let mut g = gram_from_distances(d.view(), cfg.gamma, source)?;
    let (min_eigenvalue, max_eigenvalue) = g.eigen_range();
    let psd = g.is_psd(1e-8);
    if !psd {
        log::warn!("Gram matrix is indefinite (min eigenvalue {min_eigenvalue:e}); clipping");
        g = g.clipped_psd();
    }
    write_text(&output(cfg, "distances.csv")?, &matrix_csv(&d))?;
    write_gram(output(cfg, "gram")?, g.values())?;
    let body = GramBody {
        n: g.len(),
        gamma: g.gamma(),
        source,
        min_eigenvalue,
        max_eigenvalue,
        psd,
        clipped: !psd,
    };
    write_json(output(cfg, "gram.json")?, &Report {
        provenance: input.provenance(cfg, r.as_ref()),
        body,
    })?;
    println!("gram {}x{} eigenvalues [{min_eigenvalue:.3e}, {max_eigenvalue:.3e}]", g.len(), g.len());
    Ok(())
}

fn labels_of(ds: &GraphDataset) -> Result<Vec<usize>> {
    ds.labels()
        .ok_or_else(|| CliError::usage("every graph needs a class label for this command".into()))
}

pub fn classify(cfg: &PipelineConfig) -> Result<()> {
    let input = Input::load(cfg)?;
    let labels = labels_of(&input.dataset)?;
    let alphas = match cfg.alpha {
        Some(_) => vec![cfg.require_alpha()?],
        None => cfg.alpha_grid.clone(),
    };
    if alphas.is_empty() || cfg.depth_grid.is_empty() {
        return Err(CliError::usage("alpha and depth grids must be non-empty".into()));
    }
    let mut candidates = Vec::new();
    for &depth in &cfg.depth_grid {
        let ds = input.prepared(cfg, depth)?;
        for &alpha in &alphas {
            log::info!("distances for alpha {alpha}, depth {depth}");
            let (distances, source, _) = distances(cfg, &ds, alpha)?;
            candidates.push(Candidate {
                alpha,
                depth,
                distances,
                source,
            });
        }
    }
    let report = cross_validate(&candidates, &labels, &cfg.grid(), &cfg.cv())?;
    println!("accuracy {:.2} +- {:.2}", 100.0 * report.mean, 100.0 * report.std);
    write_json(output(cfg, "classify.json")?, &Report {
        provenance: input.provenance(cfg, None),
        body: report,
    })?;
    Ok(())
}

#[derive(Serialize)]
struct Partition {
    labels: Vec<usize>,
    ari: Option<f64>,
    accuracy: Option<f64>,
}

impl Partition {
    fn scored(labels: Vec<usize>, truth: Option<&[usize]>) -> Result<Self> {
        let (ari, accuracy) = match truth {
            Some(t) => (Some(adjusted_rand_index(t, &labels)?), Some(best_permutation_accuracy(t, &labels)?)),
            None => (None, None),
        };
        Ok(Self { labels, ari, accuracy })
    }
}

#[derive(Serialize)]
struct ClusterBody {
    k: usize,
    gamma: f64,
    kmeans: Partition,
    spectral: Partition,
}

pub fn cluster(cfg: &PipelineConfig) -> Result<()> {
    let input = Input::load(cfg)?;
    let alpha = cfg.require_alpha()?;
    let ds = input.prepared(cfg, cfg.wl_depth)?;
    let truth = ds.labels();
    let k = cfg.clusters.unwrap_or(ds.num_classes());
    if k == 0 {
        return Err(CliError::usage("unlabeled dataset: pass --clusters".into()));
    }
    let (r, _, e) = embeddings(cfg, &ds, alpha)?;
    let km = kmeans_embeddings(&e, r.measure(), k, cfg.seed())?;
    let gram: GramMatrix = gram_from_distances(distance_matrix(&e, r.measure())?.view(), cfg.gamma, KernelSource::LinearFgw)?;
    let sc = spectral_clustering(&gram, k, cfg.seed())?;
    let body = ClusterBody {
        k,
        gamma: cfg.gamma,
        kmeans: Partition::scored(km, truth.as_deref())?,
        spectral: Partition::scored(sc, truth.as_deref())?,
    };
    for (name, p) in [("kmeans", &body.kmeans), ("spectral", &body.spectral)] {
        if let (Some(ari), Some(acc)) = (p.ari, p.accuracy) {
            println!("{name}: ARI {ari:.4}, accuracy {acc:.4}");
        }
    }
    write_json(output(cfg, "cluster.json")?, &Report {
        provenance: input.provenance(cfg, Some(&r)),
        body,
    })?;
    Ok(())
}

#[derive(Serialize)]
struct SamplePair {
    i: usize,
    j: usize,
    fgw: f64,
    linear_fgw: f64,
}

#[derive(Serialize)]
struct BenchBody {
    n_graphs: usize,
    threads: usize,
    t_fgw: f64,
    t_linear: f64,
    speedup: f64,
    sample_pair: Option<SamplePair>,
}

pub fn bench(cfg: &PipelineConfig) -> Result<()> {
    let input = Input::load(cfg)?;
    let alpha = cfg.require_alpha()?;
    let ds = input.prepared(cfg, cfg.wl_depth)?;
    let solver = cfg.solver(alpha)?;

    let start = Instant::now();
    let full = pairwise_fgw(&ds, &solver)?;
    let t_fgw = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let (r, _) = reference(cfg, &ds, &solver)?;
    let e = embed_dataset(&ds, &r, &solver)?;
    let linear = distance_matrix(&e, r.measure())?;
    let t_linear = start.elapsed().as_secs_f64();

    let body = BenchBody {
        n_graphs: ds.len(),
        threads: rayon::current_num_threads(),
        t_fgw,
        t_linear,
        speedup: t_fgw / t_linear,
        sample_pair: (ds.len() >= 2).then(|| SamplePair {
            i: 0,
            j: 1,
            fgw: full[[0, 1]],
            linear_fgw: linear[[0, 1]],
        }),
    };
    println!("FGW {t_fgw:.3}s, linearFGW {t_linear:.3}s, speedup {:.2}", body.speedup);
    write_json(output(cfg, "bench.json")?, &Report {
        provenance: input.provenance(cfg, Some(&r)),
        body,
    })?;
    Ok(())
}

#[derive(Serialize)]
struct Trial {
    alpha: f64,
    lemma1: Lemma1Report,
    lemma2: Lemma2Report,
}

#[derive(Serialize)]
struct VerifyBody {
    seed: u64,
    surrogate_tol: f64,
    bound_tol: f64,
    trials: usize,
    lemma1_failures: usize,
    lemma2_failures: usize,
    worst_claim1_margin: Option<f64>,
    worst_claim2_margin: f64,
    worst_bound_ratio: f64,
    details: Vec<Trial>,
}

#[derive(Serialize)]
struct VerifyProvenance<'a> {
    version: &'static str,
    config: &'a PipelineConfig,
}

const VERIFY_ALPHAS: [f64; 5] = [0.0, 0.3, 0.5, 0.7, 1.0];

pub fn verify(cfg: &PipelineConfig) -> Result<()> {
    if cfg.max_nodes == 0 {
        return Err(CliError::usage("max_nodes must be at least 1".into()));
    }
    let seed = cfg.seed.unwrap_or(7);
    let surrogate_tol = cfg.tol.unwrap_or(1e-6);
    let bound_tol = cfg.tol.unwrap_or(1e-4);
    let fixed = cfg.alpha.map(|_| cfg.require_alpha()).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = |rng: &mut ChaCha8Rng| -> Result<MeasureGraph> {
        let m = rng.random_range(1..=cfg.max_nodes);
        Ok(erdos_renyi(rng, m, 0.5, 2, 0.0, 1.0, None)?)
    };

    let mut details = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let alpha = fixed.unwrap_or(VERIFY_ALPHAS[t % VERIFY_ALPHAS.len()]);
        let solver = cfg.solver(alpha)?;
        let r = graph(&mut rng)?;
        let g = if cfg.identical { r.clone() } else { graph(&mut rng)? };
        let lemma1 = check_lemma1(&r, &g, &solver, surrogate_tol)?;
        let (g1, g2) = if cfg.identical {
            (r.clone(), r.clone())
        } else {
            (graph(&mut rng)?, graph(&mut rng)?)
        };
        let lemma2 = check_lemma2(&g1, &g2, &r, &solver, bound_tol)?;
        details.push(Trial { alpha, lemma1, lemma2 });
    }

    let lemma1_failures = details
        .iter()
        .filter(|t| t.lemma1.claim1_ok == Some(false) || !t.lemma1.claim2_ok)
        .count();
    let lemma2_failures = details.iter().filter(|t| !t.lemma2.ok).count();
    let worst_claim1_margin = details.iter().filter_map(|t| t.lemma1.claim1_margin).reduce(f64::min);
    let worst_claim2_margin = details.iter().map(|t| t.lemma1.claim2_margin).fold(f64::INFINITY, f64::min);
    let worst_bound_ratio = details
        .iter()
        .filter(|t| t.lemma2.rhs > 0.0)
        .map(|t| t.lemma2.lhs / t.lemma2.rhs)
        .fold(0.0, f64::max);
    let body = VerifyBody {
        seed,
        surrogate_tol,
        bound_tol,
        trials: cfg.trials,
        lemma1_failures,
        lemma2_failures,
        worst_claim1_margin,
        worst_claim2_margin,
        worst_bound_ratio,
        details,
    };
    println!("surrogate optimality: {lemma1_failures} of {} trials failed", cfg.trials);
    println!("linearization bound: {lemma2_failures} of {} trials failed", cfg.trials);
    #[derive(Serialize)]
    struct Out<'a> {
        provenance: VerifyProvenance<'a>,
        #[serde(flatten)]
        body: VerifyBody,
    }
    write_json(output(cfg, "verify.json")?, &Out {
        provenance: VerifyProvenance {
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
        },
        body,
    })?;
    if lemma1_failures + lemma2_failures > 0 {
        return Err(CliError {
            code: CliError::VERIFY,
            message: format!("{} trial checks failed", lemma1_failures + lemma2_failures),
        });
    }
    Ok(())
}
