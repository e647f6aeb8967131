use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::TransportPlan;
use crate::error::{Error, Result};
use crate::graph::MeasureGraph;

/// `||x_i - y_j||^2` for every row pair, via `|x|^2 + |y|^2 - 2 x.y`.
/// Results within rounding noise of zero are clamped to exactly zero.
pub fn pairwise_sq_dists(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {} vs {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let xn = x.map_axis(Axis(1), |r| r.dot(&r));
    let yn = y.map_axis(Axis(1), |r| r.dot(&r));
    let mut d = x.dot(&y.t());
    for ((i, j), v) in d.indexed_iter_mut() {
        let scale = xn[i] + yn[j];
        let d2 = scale - 2.0 * *v;
        *v = if d2 <= 8.0 * f64::EPSILON * scale { 0.0 } else { d2 };
    }
    Ok(d)
}

/// Feature cost `D_12` between the nodes of two graphs.
pub fn feature_cost_matrix(g1: &MeasureGraph, g2: &MeasureGraph) -> Result<Array2<f64>> {
    pairwise_sq_dists(g1.features(), g2.features())
}

/// `C_12 = (A.A) mu 1^T + 1 nu^T (B.B)^T`, the part of the structure cost
/// that depends only on the marginals.
pub fn structure_cost_constant(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    mu: ArrayView1<'_, f64>,
    nu: ArrayView1<'_, f64>,
) -> Array2<f64> {
    let left = a.mapv(|v| v * v).dot(&mu);
    let right = b.mapv(|v| v * v).dot(&nu);
    Array2::from_shape_fn((left.len(), right.len()), |(i, j)| left[i] + right[j])
}

/// `A pi B^T`.
pub(crate) fn cross_term(a: ArrayView2<'_, f64>, pi: &Array2<f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    a.dot(pi).dot(&b.t())
}

pub(crate) fn frob(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

/// FGW objective `sum_{ijkl} [(1-a)|x_i-y_j|^2 + a|A_ik-B_jl|^2] pi_ij pi_kl`.
///
/// Uses the actual row/column sums of the coupling, so the value equals the
/// quartic sum for any nonnegative matrix, feasible or not.
pub fn evaluate_fgw_objective(g1: &MeasureGraph, g2: &MeasureGraph, plan: &TransportPlan, alpha: f64) -> Result<f64> {
    let pi = plan.coupling();
    if pi.dim() != (g1.num_nodes(), g2.num_nodes()) {
        return Err(Error::Shape(format!(
            "plan is {:?} for graphs with {} and {} nodes",
            pi.dim(),
            g1.num_nodes(),
            g2.num_nodes()
        )));
    }
    Ok(objective_of_coupling(g1, g2, pi, alpha, None)?)
}

pub(crate) fn objective_of_coupling(
    g1: &MeasureGraph,
    g2: &MeasureGraph,
    pi: &Array2<f64>,
    alpha: f64,
    feature_cost: Option<&Array2<f64>>,
) -> Result<f64> {
    let mass: f64 = pi.sum();
    let mut value = 0.0;
    if alpha < 1.0 && g1.feature_dim() > 0 {
        let owned;
        let d = match feature_cost {
            Some(d) => d,
            None => {
                owned = feature_cost_matrix(g1, g2)?;
                &owned
            }
        };
        value += (1.0 - alpha) * mass * frob(d, pi);
    } else if g1.feature_dim() != g2.feature_dim() {
        return Err(Error::Shape("feature dimensions differ".into()));
    }
    if alpha > 0.0 {
        let rows: Array1<f64> = pi.sum_axis(Axis(1));
        let cols: Array1<f64> = pi.sum_axis(Axis(0));
        let a = g1.structure();
        let b = g2.structure();
        let a2 = a.mapv(|v| v * v);
        let b2 = b.mapv(|v| v * v);
        let self_a = rows.dot(&a2.dot(&rows));
        let self_b = cols.dot(&b2.dot(&cols));
        let cross = frob(&cross_term(a, pi, b), pi);
        value += alpha * (self_a + self_b - 2.0 * cross);
    }
    Ok(value.max(0.0))
}
