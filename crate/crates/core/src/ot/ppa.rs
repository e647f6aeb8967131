use ndarray::{Array2, ArrayView1};

use super::cost::{cross_term, feature_cost_matrix, frob, objective_of_coupling, structure_cost_constant};
use super::sinkhorn::{kl_proximal_step, round_to_marginals};
use super::{FgwResult, SolverConfig, TransportPlan};
use crate::error::{Error, Result};
use crate::graph::MeasureGraph;

/// Retries per outer step, each doubling the proximal weight.
const MAX_BACKTRACKS: usize = 30;

/// Proximal point iterations shared by the Wasserstein and FGW solvers.
///
/// `linearized` maps the current plan to the cost of the next KL-proximal
/// subproblem; `objective` scores a feasible plan. Starts from `mu nu^T`
/// and rounds every iterate onto the marginal polytope. A step that would
/// raise the objective is retried with a doubled proximal weight; if no
/// retry helps, the iterate stays put, so `history` never increases.
fn proximal_point<L, O>(
    mu: ArrayView1<'_, f64>,
    nu: ArrayView1<'_, f64>,
    cfg: &SolverConfig,
    linearized: L,
    objective: O,
) -> Result<FgwResult>
where
    L: Fn(&Array2<f64>) -> Array2<f64>,
    O: Fn(&Array2<f64>) -> Result<f64>,
{
    cfg.validate()?;
    let mut plan = TransportPlan::product(mu, nu).into_coupling();
    let mut current = objective(&plan)?;
    let mut history = Vec::with_capacity(cfg.outer_iters);
    let mut residual = 0.0;
    let mut converged = true;
    for _ in 0..cfg.outer_iters {
        let cost = linearized(&plan);
        let mut eta = cfg.eta;
        for _ in 0..=MAX_BACKTRACKS {
            let step = kl_proximal_step(&cost, &plan, mu, nu, eta, cfg.inner_sinkhorn_iters, cfg.sinkhorn_tol)?;
            let candidate = round_to_marginals(&step.plan, mu, nu);
            let value = objective(&candidate)?;
            if value <= current {
                residual = step.residual;
                converged = step.converged;
                plan = candidate;
                current = value;
                break;
            }
            eta *= 2.0;
        }
        history.push(current);
    }
    Ok(FgwResult {
        value: current,
        plan: TransportPlan::from_parts_unchecked(plan, mu.to_owned(), nu.to_owned()),
        converged,
        residual,
        history,
    })
}

/// Entropic-proximal optimal transport for a fixed cost matrix.
///
/// Like [`solve_fgw`], both orientations are solved and the cheaper plan is
/// returned, so the result does not depend on which side is the source.
pub fn solve_wasserstein(
    cost: &Array2<f64>,
    mu: ArrayView1<'_, f64>,
    nu: ArrayView1<'_, f64>,
    cfg: &SolverConfig,
) -> Result<FgwResult> {
    if cost.dim() != (mu.len(), nu.len()) {
        return Err(Error::Shape(format!(
            "cost is {:?}, marginals have lengths {} and {}",
            cost.dim(),
            mu.len(),
            nu.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Input("cost has non-finite entries".into()));
    }
    if cost.iter().any(|&c| c < 0.0) {
        return Err(Error::Input("cost has negative entries".into()));
    }
    check_measure(mu)?;
    check_measure(nu)?;
    let forward = proximal_point(mu, nu, cfg, |_| cost.clone(), |pi| Ok(frob(cost, pi)))?;
    let cost_t = cost.t().to_owned();
    let backward = proximal_point(nu, mu, cfg, |_| cost_t.clone(), |pi| Ok(frob(&cost_t, pi)))?;
    let flipped = backward.plan.transposed();
    let flipped_value = frob(cost, flipped.coupling());
    Ok(pick(forward, backward, flipped, flipped_value))
}

fn pick(forward: FgwResult, backward: FgwResult, flipped: TransportPlan, flipped_value: f64) -> FgwResult {
    if flipped_value < forward.value {
        FgwResult {
            value: flipped_value,
            plan: flipped,
            ..backward
        }
    } else {
        forward
    }
}

fn check_measure(p: ArrayView1<'_, f64>) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Input("empty measure".into()));
    }
    if p.iter().any(|&x| !(x >= 0.0)) || (p.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::Input("marginal is not a probability vector".into()));
    }
    Ok(())
}

/// Fused Gromov-Wasserstein distance (squared costs) from `g1` to `g2`.
///
/// Each outer step solves
/// `min <(1-a) D + a (C_12 - 2 A pi_t B^T), pi> + eta KL(pi || pi_t)`
/// by Sinkhorn scaling of `pi_t . exp(-cost / eta)`. The returned plan is
/// rounded onto the marginals and `value` is its exact objective.
///
/// The iteration is run from both sides (`g1 -> g2` and `g2 -> g1`,
/// transposed back) and the lower-objective plan is kept, so
/// `solve_fgw(g1, g2)` and `solve_fgw(g2, g1)` agree. Ties keep `g1 -> g2`.
pub fn solve_fgw(g1: &MeasureGraph, g2: &MeasureGraph, cfg: &SolverConfig) -> Result<FgwResult> {
    let forward = solve_fgw_oriented(g1, g2, cfg)?;
    let backward = solve_fgw_oriented(g2, g1, cfg)?;
    let flipped = backward.plan.transposed();
    let flipped_value = objective_of_coupling(g1, g2, flipped.coupling(), cfg.alpha, None)?;
    Ok(pick(forward, backward, flipped, flipped_value))
}

/// One-sided proximal point solve from `g1` to `g2`.
pub fn solve_fgw_oriented(g1: &MeasureGraph, g2: &MeasureGraph, cfg: &SolverConfig) -> Result<FgwResult> {
    cfg.validate()?;
    let alpha = cfg.alpha;
    if g1.feature_dim() != g2.feature_dim() {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {} vs {}",
            g1.feature_dim(),
            g2.feature_dim()
        )));
    }
    if g1.feature_dim() == 0 && alpha != 1.0 {
        return Err(Error::Usage("graphs without features require alpha = 1".into()));
    }
    let (mu, nu) = (g1.measure(), g2.measure());
    let (a, b) = (g1.structure(), g2.structure());

    let d12 = if g1.feature_dim() > 0 {
        feature_cost_matrix(g1, g2)?
    } else {
        Array2::zeros((g1.num_nodes(), g2.num_nodes()))
    };
    let mut fixed = d12.mapv(|v| (1.0 - alpha) * v);
    if alpha > 0.0 {
        fixed.scaled_add(alpha, &structure_cost_constant(a, b, mu, nu));
    }
    let linearized = |pi: &Array2<f64>| {
        if alpha > 0.0 {
            let mut c = fixed.clone();
            c.scaled_add(-2.0 * alpha, &cross_term(a, pi, b));
            c
        } else {
            fixed.clone()
        }
    };
    let objective = |pi: &Array2<f64>| objective_of_coupling(g1, g2, pi, alpha, Some(&d12));
    proximal_point(mu, nu, cfg, linearized, objective)
}
