use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

pub(crate) struct ScalingOutcome {
    pub plan: Array2<f64>,
    pub residual: f64,
    pub converged: bool,
}

/// Solve `min <cost, pi> + eta KL(pi || prior)` over couplings of `mu`, `nu`.
///
/// The solution is `diag(u) (prior . exp(-cost/eta)) diag(v)`. Runs in the
/// linear domain when the Gibbs kernel is representable and switches to
/// log-domain updates when any supported entry underflows or the scalings
/// stop being finite.
pub(crate) fn kl_proximal_step(
    cost: &Array2<f64>,
    prior: &Array2<f64>,
    mu: ArrayView1<'_, f64>,
    nu: ArrayView1<'_, f64>,
    eta: f64,
    max_iters: usize,
    tol: f64,
) -> Result<ScalingOutcome> {
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Input("transport cost has non-finite entries".into()));
    }
    // log of the kernel, shifted so the largest supported entry is 0
    let mut log_k = Array2::from_shape_fn(cost.dim(), |(i, j)| {
        let p = prior[[i, j]];
        if p > 0.0 {
            p.ln() - cost[[i, j]] / eta
        } else {
            f64::NEG_INFINITY
        }
    });
    let top = log_k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::Numerical("prior coupling is identically zero".into()));
    }
    log_k.mapv_inplace(|v| v - top);
    check_support(&log_k, mu, nu)?;

    let kernel = log_k.mapv(f64::exp);
    let underflow = log_k
        .iter()
        .zip(kernel.iter())
        .any(|(&l, &k)| l > f64::NEG_INFINITY && k < f64::MIN_POSITIVE);
    if !underflow {
        if let Some(out) = linear_domain(&kernel, mu, nu, max_iters, tol) {
            return Ok(out);
        }
        log::debug!("sinkhorn scalings left the representable range, using log domain");
    }
    Ok(log_domain(&log_k, mu, nu, max_iters, tol))
}

fn check_support(log_k: &Array2<f64>, mu: ArrayView1<'_, f64>, nu: ArrayView1<'_, f64>) -> Result<()> {
    for (i, row) in log_k.outer_iter().enumerate() {
        if mu[i] > 0.0 && row.iter().all(|&v| v == f64::NEG_INFINITY) {
            return Err(Error::Numerical(format!(
                "Gibbs kernel row {i} vanished; increase eta"
            )));
        }
    }
    for (j, col) in log_k.axis_iter(Axis(1)).enumerate() {
        if nu[j] > 0.0 && col.iter().all(|&v| v == f64::NEG_INFINITY) {
            return Err(Error::Numerical(format!(
                "Gibbs kernel column {j} vanished; increase eta"
            )));
        }
    }
    Ok(())
}

fn safe_div(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn linear_domain(
    kernel: &Array2<f64>,
    mu: ArrayView1<'_, f64>,
    nu: ArrayView1<'_, f64>,
    max_iters: usize,
    tol: f64,
) -> Option<ScalingOutcome> {
    let (m, n) = kernel.dim();
    let mut u = Array1::<f64>::ones(m);
    let mut v = Array1::<f64>::ones(n);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let kv = kernel.dot(&v);
        u = Array1::from_shape_fn(m, |i| safe_div(mu[i], kv[i]));
        let ktu = kernel.t().dot(&u);
        v = Array1::from_shape_fn(n, |j| safe_div(nu[j], ktu[j]));
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return None;
        }
        // columns are exact after the v update; measure the row side
        let kv = kernel.dot(&v);
        residual = (0..m).map(|i| (u[i] * kv[i] - mu[i]).abs()).sum();
        if residual < tol {
            break;
        }
    }
    let plan = Array2::from_shape_fn((m, n), |(i, j)| u[i] * kernel[[i, j]] * v[j]);
    if plan.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some(ScalingOutcome {
        plan,
        residual,
        converged: residual < tol,
    })
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(it: I) -> f64 {
    let top = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    top + it.map(|x| (x - top).exp()).sum::<f64>().ln()
}

fn log_domain(
    log_k: &Array2<f64>,
    mu: ArrayView1<'_, f64>,
    nu: ArrayView1<'_, f64>,
    max_iters: usize,
    tol: f64,
) -> ScalingOutcome {
    let (m, n) = log_k.dim();
    let log_mu = mu.mapv(f64::ln);
    let log_nu = nu.mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(m);
    let mut g = Array1::<f64>::zeros(n);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        for i in 0..m {
            f[i] = if mu[i] > 0.0 {
                log_mu[i] - log_sum_exp((0..n).map(|j| log_k[[i, j]] + g[j]))
            } else {
                f64::NEG_INFINITY
            };
        }
        for j in 0..n {
            g[j] = if nu[j] > 0.0 {
                log_nu[j] - log_sum_exp((0..m).map(|i| log_k[[i, j]] + f[i]))
            } else {
                f64::NEG_INFINITY
            };
        }
        residual = (0..m)
            .map(|i| {
                let row = log_sum_exp((0..n).map(|j| log_k[[i, j]] + f[i] + g[j])).exp();
                (row - mu[i]).abs()
            })
            .sum();
        if residual < tol {
            break;
        }
    }
    let plan = Array2::from_shape_fn((m, n), |(i, j)| {
        let e = log_k[[i, j]] + f[i] + g[j];
        if e == f64::NEG_INFINITY || e.is_nan() {
            0.0
        } else {
            e.exp()
        }
    });
    ScalingOutcome {
        plan,
        residual,
        converged: residual < tol,
    }
}

/// Project a nonnegative matrix onto the couplings of `mu` and `nu`:
/// scale down overfull rows, then overfull columns, then add the rank-one
/// correction `err_r err_c^T / |err_r|_1`. The result has exact marginals
/// up to floating-point summation.
pub fn round_to_marginals(p: &Array2<f64>, mu: ArrayView1<'_, f64>, nu: ArrayView1<'_, f64>) -> Array2<f64> {
    let mut f = p.clone();
    let rows = f.sum_axis(Axis(1));
    for (i, mut row) in f.outer_iter_mut().enumerate() {
        if rows[i] > mu[i] {
            row *= mu[i] / rows[i];
        }
    }
    let cols = f.sum_axis(Axis(0));
    for (j, mut col) in f.axis_iter_mut(Axis(1)).enumerate() {
        if cols[j] > nu[j] {
            col *= nu[j] / cols[j];
        }
    }
    let err_r: Array1<f64> = (&mu - &f.sum_axis(Axis(1))).mapv(|x| x.max(0.0));
    let err_c: Array1<f64> = (&nu - &f.sum_axis(Axis(0))).mapv(|x| x.max(0.0));
    let total = err_r.sum();
    if total > 0.0 {
        for ((i, j), x) in f.indexed_iter_mut() {
            *x += err_r[i] * err_c[j] / total;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rounding_restores_marginals() {
        let p = array![[0.3, 0.1], [0.05, 0.6]];
        let mu = array![0.5, 0.5];
        let nu = array![0.4, 0.6];
        let r = round_to_marginals(&p, mu.view(), nu.view());
        for (a, b) in r.sum_axis(Axis(1)).iter().zip(mu.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in r.sum_axis(Axis(0)).iter().zip(nu.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(r.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn log_domain_agrees_with_linear() {
        let cost = array![[0.0, 1.0, 2.0], [1.0, 0.5, 0.2], [0.3, 0.9, 0.0]];
        let prior = Array2::from_elem((3, 3), 1.0_f64 / 9.0);
        let mu = array![0.2, 0.3, 0.5];
        let nu = array![0.4, 0.4, 0.2];
        let log_k = Array2::from_shape_fn((3, 3), |(i, j)| prior[[i, j]].ln() - cost[[i, j]] / 0.5);
        let lin = linear_domain(&log_k.mapv(f64::exp), mu.view(), nu.view(), 500, 1e-14).unwrap();
        let log = log_domain(&log_k, mu.view(), nu.view(), 500, 1e-14);
        for (a, b) in lin.plan.iter().zip(log.plan.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_eta_uses_log_domain() {
        // exp(-100 / 1e-3) underflows; the log path must still return a coupling
        let cost = array![[0.0, 100.0], [100.0, 0.0]];
        let prior = Array2::from_elem((2, 2), 0.25);
        let mu = array![0.5, 0.5];
        let out = kl_proximal_step(&cost, &prior, mu.view(), mu.view(), 1e-3, 50, 1e-12).unwrap();
        assert!((out.plan[[0, 0]] - 0.5).abs() < 1e-12);
        assert!(out.plan[[0, 1]] < 1e-300);
    }

    #[test]
    fn non_finite_cost_rejected() {
        let cost = array![[0.0, f64::NAN]];
        let prior = array![[0.5, 0.5]];
        let r = kl_proximal_step(&cost, &prior, array![1.0].view(), array![0.5, 0.5].view(), 0.1, 10, 1e-9);
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn vanished_row_is_numerical_error() {
        let cost = Array2::zeros((2, 2));
        let prior = array![[0.0, 0.0], [0.5, 0.5]];
        let mu = array![0.5, 0.5];
        let r = kl_proximal_step(&cost, &prior, mu.view(), mu.view(), 0.1, 10, 1e-9);
        assert!(matches!(r, Err(Error::Numerical(_))));
    }
}
