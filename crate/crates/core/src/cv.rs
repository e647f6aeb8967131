//! Nested, stratified cross-validation of the kernel SVM over precomputed
//! distance matrices.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{clip_psd, gram_from_distances, KernelSource};
use crate::svm::{accuracy, svm_classify_psd, SvmConfig};

/// A distance matrix computed for one (alpha, WL depth) setting.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub alpha: f64,
    pub depth: usize,
    pub distances: Array2<f64>,
    pub source: KernelSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Default for ParamGrid {
    /// `C in {2^-5, ..., 2^10}`, `gamma in {10^-2, ..., 10^2}`.
    fn default() -> Self {
        Self {
            c: (-5..=10).map(|e| 2f64.powi(e)).collect(),
            gamma: (-2..=2).map(|e| 10f64.powi(e)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub svm: SvmConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            repeats: 10,
            inner_folds: 5,
            seed: 0,
            svm: SvmConfig::default(),
        }
    }
}

/// One cell of the search grid and its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub alpha: f64,
    pub depth: usize,
    pub gamma: f64,
    pub c: f64,
    /// Inner-validation accuracy, averaged over every outer fold.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub mean: f64,
    pub std: f64,
    /// Mean outer-fold accuracy of each repeat.
    pub repeat_accuracies: Vec<f64>,
    /// Parameters picked on the inner folds, per repeat and outer fold.
    pub selections: Vec<GridScore>,
    pub grid_scores: Vec<GridScore>,
}

/// Deal each class's shuffled members round-robin over `folds` folds,
/// continuing the rotation from class to class.
fn deal(labels: &[usize], indices: &[usize], folds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut classes: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut out = vec![Vec::new(); folds];
    let mut slot = 0;
    for class in classes {
        let mut members: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        for i in members {
            out[slot % folds].push(i);
            slot += 1;
        }
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    out
}

/// Stratified folds over all points. Errors when some training split would
/// miss a class, which happens exactly when a class has a single member.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > labels.len() {
        return Err(Error::Usage(format!("{folds} folds requested for {} points", labels.len())));
    }
    let max = labels.iter().max().copied().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    labels.iter().for_each(|&l| counts[l] += 1);
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present > 1 {
        if let Some(class) = counts.iter().position(|&c| c == 1) {
            return Err(Error::Input(format!(
                "class {class} has a single member and would be absent from one training split"
            )));
        }
    }
    let all: Vec<usize> = (0..labels.len()).collect();
    Ok(deal(labels, &all, folds, &mut ChaCha8Rng::seed_from_u64(seed)))
}

fn take(m: &Array2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows).select(Axis(1), cols)
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    fold.iter().for_each(|&i| mask[i] = false);
    (0..n).filter(|&i| mask[i]).collect()
}

/// Repeated stratified k-fold accuracy with every hyperparameter (C, gamma,
/// alpha, depth) chosen on inner folds of the training split only.
pub fn cross_validate(candidates: &[Candidate], labels: &[usize], grid: &ParamGrid, cfg: &CvConfig) -> Result<CvReport> {
    let n = labels.len();
    if candidates.is_empty() || grid.c.is_empty() || grid.gamma.is_empty() {
        return Err(Error::Usage("empty hyperparameter grid".into()));
    }
    if cfg.repeats == 0 || cfg.inner_folds < 2 {
        return Err(Error::Usage("need repeats >= 1 and inner_folds >= 2".into()));
    }
    // one kernel per (candidate, gamma); principal blocks inherit PSD-ness
    let mut kernels = Vec::new();
    let mut cells = Vec::new();
    for cand in candidates {
        if cand.distances.dim() != (n, n) {
            return Err(Error::Shape(format!("distance matrix {:?} for {n} labels", cand.distances.dim())));
        }
        for &gamma in &grid.gamma {
            let gram = gram_from_distances(cand.distances.view(), gamma, cand.source)?;
            let values = if gram.is_psd(1e-8) {
                gram.values().clone()
            } else {
                log::warn!("kernel (alpha {}, gamma {gamma}) is indefinite; clipping", cand.alpha);
                clip_psd(gram.values())
            };
            kernels.push(values);
            for &c in &grid.c {
                cells.push((kernels.len() - 1, GridScore {
                    alpha: cand.alpha,
                    depth: cand.depth,
                    gamma,
                    c,
                    accuracy: 0.0,
                }));
            }
        }
    }

    let mut totals = vec![0.0; cells.len()];
    let mut outer_count = 0usize;
    let mut selections = Vec::new();
    let mut repeat_accuracies = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let seed = cfg.seed.wrapping_add(r as u64);
        let folds = stratified_folds(labels, cfg.folds, seed)?;
        let mut fold_acc = Vec::with_capacity(folds.len());
        for (f, test) in folds.iter().enumerate() {
            let train = complement(n, test);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(f as u64));
            let inner = deal(labels, &train, cfg.inner_folds.min(train.len()), &mut rng);
            let scores: Vec<f64> = cells
                .par_iter()
                .map(|(kid, cell)| {
                    let kernel = &kernels[*kid];
                    let mut acc = Vec::new();
                    for valid in inner.iter().filter(|v| !v.is_empty()) {
                        let fit: Vec<usize> = train.iter().copied().filter(|i| !valid.contains(i)).collect();
                        let y_fit: Vec<usize> = fit.iter().map(|&i| labels[i]).collect();
                        let y_val: Vec<usize> = valid.iter().map(|&i| labels[i]).collect();
                        let pred = svm_classify_psd(
                            take(kernel, &fit, &fit).view(),
                            &y_fit,
                            take(kernel, valid, &fit).view(),
                            &cfg.svm.with_c(cell.c),
                        )?;
                        acc.push(accuracy(&y_val, &pred));
                    }
                    Ok(acc.iter().sum::<f64>() / acc.len().max(1) as f64)
                })
                .collect::<Result<_>>()?;
            let best = (0..cells.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
            scores.iter().zip(totals.iter_mut()).for_each(|(s, t)| *t += s);
            outer_count += 1;

            let (kid, cell) = &cells[best];
            let kernel = &kernels[*kid];
            let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
            let pred = svm_classify_psd(
                take(kernel, &train, &train).view(),
                &y_train,
                take(kernel, test, &train).view(),
                &cfg.svm.with_c(cell.c),
            )?;
            fold_acc.push(accuracy(&y_test, &pred));
            selections.push(GridScore {
                accuracy: scores[best],
                ..cell.clone()
            });
        }
        repeat_accuracies.push(fold_acc.iter().sum::<f64>() / fold_acc.len() as f64);
    }
    let mean = repeat_accuracies.iter().sum::<f64>() / repeat_accuracies.len() as f64;
    let var = repeat_accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / repeat_accuracies.len() as f64;
    let grid_scores = cells
        .into_iter()
        .zip(totals)
        .map(|((_, cell), t)| GridScore {
            accuracy: t / outer_count as f64,
            ..cell
        })
        .collect();
    Ok(CvReport {
        mean,
        std: var.sqrt(),
        repeat_accuracies,
        selections,
        grid_scores,
    })
}
