//! Optimal transport between measure graphs.
//!
//! The FGW problem with squared costs is solved by a proximal point method:
//! every outer step linearizes the structure term at the current plan and
//! solves the KL-proximal subproblem with Sinkhorn-Knopp scaling.

mod cost;
pub mod exhaustive;
mod ppa;
mod sinkhorn;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cost::{evaluate_fgw_objective, feature_cost_matrix, pairwise_sq_dists, structure_cost_constant};
pub use ppa::{solve_fgw, solve_fgw_oriented, solve_wasserstein};
pub use sinkhorn::round_to_marginals;

/// Default marginal feasibility tolerance for [`TransportPlan`].
pub const MARGINAL_TOL: f64 = 1e-7;

/// A coupling between two node measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    coupling: Array2<f64>,
    source: Array1<f64>,
    target: Array1<f64>,
}

impl TransportPlan {
    /// Checks shape, nonnegativity and both marginals within [`MARGINAL_TOL`].
    pub fn new(coupling: Array2<f64>, source: Array1<f64>, target: Array1<f64>) -> Result<Self> {
        Self::with_tolerance(coupling, source, target, MARGINAL_TOL)
    }

    pub fn with_tolerance(
        coupling: Array2<f64>,
        source: Array1<f64>,
        target: Array1<f64>,
        tol: f64,
    ) -> Result<Self> {
        if coupling.dim() != (source.len(), target.len()) {
            return Err(Error::Shape(format!(
                "coupling is {:?}, marginals have lengths {} and {}",
                coupling.dim(),
                source.len(),
                target.len()
            )));
        }
        if coupling.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Input("coupling has a negative or non-finite entry".into()));
        }
        let plan = Self {
            coupling,
            source,
            target,
        };
        let (row, col) = plan.marginal_residuals();
        if row > tol || col > tol {
            return Err(Error::Input(format!(
                "coupling violates marginals (row residual {row:.3e}, column residual {col:.3e})"
            )));
        }
        Ok(plan)
    }

    /// The independent coupling `mu nu^T`.
    pub fn product(source: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>) -> Self {
        let coupling = outer(source, target);
        Self {
            coupling,
            source: source.to_owned(),
            target: target.to_owned(),
        }
    }

    /// `diag(sigma)`: the identity matching of a measure onto itself.
    pub fn diagonal(measure: ArrayView1<'_, f64>) -> Self {
        Self {
            coupling: Array2::from_diag(&measure),
            source: measure.to_owned(),
            target: measure.to_owned(),
        }
    }

    pub(crate) fn from_parts_unchecked(coupling: Array2<f64>, source: Array1<f64>, target: Array1<f64>) -> Self {
        Self {
            coupling,
            source,
            target,
        }
    }

    pub fn coupling(&self) -> &Array2<f64> {
        &self.coupling
    }

    pub fn source_measure(&self) -> ArrayView1<'_, f64> {
        self.source.view()
    }

    pub fn target_measure(&self) -> ArrayView1<'_, f64> {
        self.target.view()
    }

    pub fn into_coupling(self) -> Array2<f64> {
        self.coupling
    }

    /// Max absolute deviation of row sums and column sums from the marginals.
    pub fn marginal_residuals(&self) -> (f64, f64) {
        let rows = self.coupling.sum_axis(ndarray::Axis(1));
        let cols = self.coupling.sum_axis(ndarray::Axis(0));
        let dev = |a: &Array1<f64>, b: &Array1<f64>| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        (dev(&rows, &self.source), dev(&cols, &self.target))
    }

    /// The plan seen from the other side (`pi^T`, marginals swapped).
    pub fn transposed(&self) -> Self {
        Self {
            coupling: self.coupling.t().to_owned(),
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }
}

pub(crate) fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Parameters of the proximal point solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Weight of the structure term; `1 - alpha` weights the features.
    pub alpha: f64,
    /// KL proximal weight.
    pub eta: f64,
    /// Number of proximal (outer) steps.
    pub outer_iters: usize,
    pub inner_sinkhorn_iters: usize,
    /// Stop Sinkhorn once the L1 marginal residual falls below this.
    pub sinkhorn_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            eta: 0.1,
            outer_iters: 5,
            inner_sinkhorn_iters: 50,
            sinkhorn_tol: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Usage(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Usage(format!("eta must be positive, got {}", self.eta)));
        }
        if self.outer_iters == 0 || self.inner_sinkhorn_iters == 0 {
            return Err(Error::Usage("iteration counts must be at least 1".into()));
        }
        if !(self.sinkhorn_tol > 0.0) {
            return Err(Error::Usage("sinkhorn_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of a transport solve.
#[derive(Debug, Clone)]
pub struct FgwResult {
    /// Objective value at `plan`.
    pub value: f64,
    pub plan: TransportPlan,
    /// Whether the final Sinkhorn call met its tolerance.
    pub converged: bool,
    /// L1 marginal residual of the last Sinkhorn call, before rounding.
    pub residual: f64,
    /// Objective after each outer step (on the rounded iterate).
    pub history: Vec<f64>,
}
