//! C-SVM on precomputed kernels: SMO for the binary dual, one-vs-rest for
//! more classes.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{clip_psd, is_psd};

/// Solver constants for [`svm_classify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    /// KKT violation at which SMO stops.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_iters: 100_000,
        }
    }
}

impl SvmConfig {
    pub fn with_c(self, c: f64) -> Self {
        Self { c, ..self }
    }
}

/// A trained binary machine: `f(x) = sum_i coef_i K(x_i, x) - rho`.
#[derive(Debug, Clone)]
pub struct BinarySvm {
    /// `alpha_i y_i` per training point.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub converged: bool,
}

impl BinarySvm {
    /// SMO with second-order working-set selection on
    /// `min 1/2 a^T Q a - 1^T a`, `0 <= a <= C`, `y^T a = 0`.
    pub fn train(k: ArrayView2<'_, f64>, y: &[f64], cfg: &SvmConfig) -> Result<Self> {
        let n = y.len();
        if k.dim() != (n, n) {
            return Err(Error::Shape(format!("kernel is {:?} for {n} labels", k.dim())));
        }
        if !(cfg.c > 0.0) || !cfg.c.is_finite() {
            return Err(Error::Usage(format!("C must be positive, got {}", cfg.c)));
        }
        let c = cfg.c;
        let q = |i: usize, j: usize| y[i] * y[j] * k[[i, j]];
        let mut alpha = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
        let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
        let mut converged = false;
        for _ in 0..cfg.max_iters {
            let mut i = usize::MAX;
            let mut gmax = f64::NEG_INFINITY;
            for t in 0..n {
                if up(alpha[t], y[t]) && -y[t] * grad[t] >= gmax {
                    gmax = -y[t] * grad[t];
                    i = t;
                }
            }
            let mut j = usize::MAX;
            let mut gmax2 = f64::NEG_INFINITY;
            let mut best = f64::INFINITY;
            for t in 0..n {
                if !low(alpha[t], y[t]) {
                    continue;
                }
                gmax2 = gmax2.max(y[t] * grad[t]);
                if i == usize::MAX {
                    continue;
                }
                let b = gmax + y[t] * grad[t];
                if b > 0.0 {
                    let mut a = q(i, i) + q(t, t) - 2.0 * y[i] * y[t] * q(i, t);
                    if a <= 0.0 {
                        a = 1e-12;
                    }
                    if -(b * b) / a <= best {
                        best = -(b * b) / a;
                        j = t;
                    }
                }
            }
            if gmax + gmax2 < cfg.tol || i == usize::MAX || j == usize::MAX {
                converged = true;
                break;
            }
            let (ai, aj) = (alpha[i], alpha[j]);
            let (yi, yj) = (y[i], y[j]);
            let mut quad = q(i, i) + q(j, j) - 2.0 * yi * yj * q(i, j);
            if quad <= 0.0 {
                quad = 1e-12;
            }
            if yi != yj {
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = ai - aj;
                let (mut ni, mut nj) = (ai + delta, aj + delta);
                if diff > 0.0 && nj < 0.0 {
                    nj = 0.0;
                    ni = diff;
                } else if diff <= 0.0 && ni < 0.0 {
                    ni = 0.0;
                    nj = -diff;
                }
                if diff > 0.0 && ni > c {
                    ni = c;
                    nj = c - diff;
                } else if diff <= 0.0 && nj > c {
                    nj = c;
                    ni = c + diff;
                }
                alpha[i] = ni;
                alpha[j] = nj;
            } else {
                let delta = (grad[i] - grad[j]) / quad;
                let sum = ai + aj;
                let (mut ni, mut nj) = (ai - delta, aj + delta);
                if sum > c && ni > c {
                    ni = c;
                    nj = sum - c;
                } else if sum <= c && nj < 0.0 {
                    nj = 0.0;
                    ni = sum;
                }
                if sum > c && nj > c {
                    nj = c;
                    ni = sum - c;
                } else if sum <= c && ni < 0.0 {
                    ni = 0.0;
                    nj = sum;
                }
                alpha[i] = ni;
                alpha[j] = nj;
            }
            let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
            for t in 0..n {
                grad[t] += q(t, i) * di + q(t, j) * dj;
            }
        }
        if !converged {
            log::warn!("SMO stopped at the iteration limit");
        }
        Ok(Self {
            coef: alpha.iter().zip(y).map(|(a, yi)| a * yi).collect(),
            rho: offset(&alpha, y, &grad, c),
            converged,
        })
    }

    /// Decision values for rows of a test-by-train kernel.
    pub fn decision(&self, k_test: ArrayView2<'_, f64>) -> Vec<f64> {
        k_test
            .outer_iter()
            .map(|row| row.iter().zip(&self.coef).map(|(kv, c)| kv * c).sum::<f64>() - self.rho)
            .collect()
    }
}

fn offset(alpha: &[f64], y: &[f64], grad: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// One-vs-rest predictions for `k_test` (test x train). Classes absent from
/// the training labels are never predicted; exact score ties go to the
/// lowest class index. An indefinite training kernel is clipped to its PSD
/// part with a warning.
pub fn svm_classify(k_train: ArrayView2<'_, f64>, y_train: &[usize], k_test: ArrayView2<'_, f64>, cfg: &SvmConfig) -> Result<Vec<usize>> {
    let n = y_train.len();
    if n == 0 {
        return Err(Error::Input("no training points".into()));
    }
    if k_test.ncols() != n {
        return Err(Error::Shape(format!("test kernel has {} columns for {n} training points", k_test.ncols())));
    }
    if is_psd(&k_train.to_owned(), 1e-8) {
        svm_classify_psd(k_train, y_train, k_test, cfg)
    } else {
        log::warn!("training kernel is indefinite; clipping negative eigenvalues");
        svm_classify_psd(clip_psd(&k_train.to_owned()).view(), y_train, k_test, cfg)
    }
}

/// [`svm_classify`] without the spectrum check, for kernels already known
/// to be PSD (for instance principal blocks of a verified Gram matrix).
pub fn svm_classify_psd(k_train: ArrayView2<'_, f64>, y_train: &[usize], k_test: ArrayView2<'_, f64>, cfg: &SvmConfig) -> Result<Vec<usize>> {
    let n = y_train.len();
    if n == 0 {
        return Err(Error::Input("no training points".into()));
    }
    if k_test.ncols() != n {
        return Err(Error::Shape(format!("test kernel has {} columns for {n} training points", k_test.ncols())));
    }
    let mut classes: Vec<usize> = y_train.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() == 1 {
        return Ok(vec![classes[0]; k_test.nrows()]);
    }
    let mut scores = vec![vec![f64::NEG_INFINITY; classes.len()]; k_test.nrows()];
    for (ci, &class) in classes.iter().enumerate() {
        let y: Vec<f64> = y_train.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let model = BinarySvm::train(k_train, &y, cfg)?;
        for (row, s) in model.decision(k_test).into_iter().enumerate() {
            scores[row][ci] = s;
        }
    }
    Ok(scores
        .iter()
        .map(|row| {
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            classes[best]
        })
        .collect())
}

pub fn accuracy(truth: &[usize], predicted: &[usize]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    truth.iter().zip(predicted).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn linear_kernel(x: &[f64], z: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((z.len(), x.len()), |(i, j)| z[i] * x[j])
    }

    #[test]
    fn separable_points_on_a_line() {
        let x = [-1.0, -1.0, 1.0, 1.0];
        let k = linear_kernel(&x, &x);
        let y = [0, 0, 1, 1];
        let pred = svm_classify(k.view(), &y, k.view(), &SvmConfig::default()).unwrap();
        assert_eq!(pred, y);
    }

    #[test]
    fn identical_rows_predict_majority() {
        let k = Array2::ones((4, 4));
        let y = [1, 1, 1, 0];
        let pred = svm_classify(k.view(), &y, k.view(), &SvmConfig::default()).unwrap();
        assert_eq!(pred, vec![1; 4]);
    }

    #[test]
    fn single_class_is_constant() {
        let k = array![[1.0, 0.5], [0.5, 1.0]];
        let pred = svm_classify(k.view(), &[2, 2], k.view(), &SvmConfig::default()).unwrap();
        assert_eq!(pred, vec![2, 2]);
    }

    #[test]
    fn kernel_rescaling_with_inverse_c() {
        let x = [-2.0, -0.5, 0.3, 1.5, 2.0, -1.2];
        let y = [0, 0, 1, 1, 1, 0];
        let z = [-3.0, -0.1, 0.05, 0.9];
        let (k, kt) = (linear_kernel(&x, &x), linear_kernel(&x, &z));
        let base = svm_classify(k.view(), &y, kt.view(), &SvmConfig::default().with_c(0.5)).unwrap();
        let scaled = svm_classify(
            (&k * 4.0).view(),
            &y,
            (&kt * 4.0).view(),
            &SvmConfig::default().with_c(0.125),
        )
        .unwrap();
        assert_eq!(base, scaled);
    }

    #[test]
    fn three_classes() {
        // one-hot features: the linear kernel is the identity-like overlap
        let x = [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let k = Array2::from_shape_fn((5, 5), |(i, j)| (0..3).map(|c| x[i][c] * x[j][c]).sum());
        let y = [0, 0, 1, 1, 2];
        let pred = svm_classify(k.view(), &y, k.view(), &SvmConfig::default().with_c(10.0)).unwrap();
        assert_eq!(pred, y);
    }
}
