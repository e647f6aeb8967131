//! Numerical checks of the two linearization lemmas on small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{mixing_diameter, MeasureGraph};
use crate::linear::{barycentric_project, diagonal_objective, embed, linear_fgw_distance};
use crate::ot::exhaustive::{minimize_fgw, SearchOptions};
use crate::ot::{solve_fgw, FgwResult, SolverConfig};

/// Outcome of the surrogate-optimality check for one (reference, graph) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    /// Objective of `diag(sigma)` between the reference and the surrogate.
    pub diag_value: f64,
    /// Best FGW value found from the reference to the graph.
    pub fgw_to_g: f64,
    /// Best FGW value found from the reference to the surrogate.
    pub fgw_to_surrogate: f64,
    /// Whether the reference-to-graph plan came from the exhaustive search.
    pub exhaustive: bool,
    /// `None` when the surrogate problem is too large to search exhaustively.
    pub claim1_ok: Option<bool>,
    /// Best searched objective minus `diag_value`.
    pub claim1_margin: Option<f64>,
    pub claim2_ok: bool,
    /// `fgw_to_g - fgw_to_surrogate`.
    pub claim2_margin: f64,
}

/// Outcome of the linearization-error bound check for one triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub fgw: f64,
    pub linear_fgw: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Lower of the proximal solver and, when the instance is small enough, the
/// exhaustive search. The flag reports whether the search ran.
pub fn best_fgw(g1: &MeasureGraph, g2: &MeasureGraph, cfg: &SolverConfig) -> Result<(FgwResult, bool)> {
    let solved = solve_fgw(g1, g2, cfg)?;
    match minimize_fgw(g1, g2, cfg.alpha, &SearchOptions::default()) {
        Ok(found) if found.value < solved.value => Ok((found, true)),
        Ok(_) => Ok((solved, true)),
        Err(Error::Usage(_)) => Ok((solved, false)),
        Err(e) => Err(e),
    }
}

/// Builds the surrogate from the best plan found and checks that
/// (1) `diag(sigma)` is optimal between reference and surrogate and
/// (2) the reference is no farther from the surrogate than from `g`.
/// Both comparisons allow `tol` of slack.
pub fn check_lemma1(reference: &MeasureGraph, g: &MeasureGraph, cfg: &SolverConfig, tol: f64) -> Result<Lemma1Report> {
    let (to_g, exhaustive) = best_fgw(reference, g, cfg)?;
    let surrogate = barycentric_project(reference, g, &to_g.plan)?;
    let sg = surrogate.to_measure_graph()?;
    let diag_value = diagonal_objective(reference, &surrogate, cfg.alpha)?;

    let solved = solve_fgw(reference, &sg, cfg)?.value;
    let (claim1_ok, claim1_margin, searched) = match minimize_fgw(reference, &sg, cfg.alpha, &SearchOptions::default()) {
        Ok(found) => {
            let margin = found.value - diag_value;
            (Some(margin >= -tol), Some(margin), found.value)
        }
        Err(Error::Usage(_)) => (None, None, f64::INFINITY),
        Err(e) => return Err(e),
    };
    let fgw_to_surrogate = diag_value.min(solved).min(searched);
    let claim2_margin = to_g.value - fgw_to_surrogate;
    Ok(Lemma1Report {
        diag_value,
        fgw_to_g: to_g.value,
        fgw_to_surrogate,
        exhaustive,
        claim1_ok,
        claim1_margin,
        claim2_ok: claim2_margin >= -tol,
        claim2_margin,
    })
}

/// `|FGW(g1, g2) - linearFGW(g1, g2)|` against
/// `4 min{FGW(g1, R), FGW(g2, R)} + 2 diam(g1) + 2 diam(g2)`, with `tol`
/// relative slack on the right-hand side.
pub fn check_lemma2(
    g1: &MeasureGraph,
    g2: &MeasureGraph,
    reference: &MeasureGraph,
    cfg: &SolverConfig,
    tol: f64,
) -> Result<Lemma2Report> {
    let alpha = cfg.alpha;
    let fgw = best_fgw(g1, g2, cfg)?.0.value;
    let e1 = embed(reference, g1, cfg)?;
    let e2 = embed(reference, g2, cfg)?;
    let linear_fgw = linear_fgw_distance(&e1, &e2, reference.measure())?;
    let to_ref = best_fgw(g1, reference, cfg)?.0.value.min(best_fgw(g2, reference, cfg)?.0.value);
    let lhs = (fgw - linear_fgw).abs();
    let rhs = 4.0 * to_ref + 2.0 * mixing_diameter(g1, alpha) + 2.0 * mixing_diameter(g2, alpha);
    Ok(Lemma2Report {
        fgw,
        linear_fgw,
        lhs,
        rhs,
        ok: lhs <= rhs * (1.0 + tol),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path3() -> MeasureGraph {
        MeasureGraph::uniform(
            array![[0.0], [1.0], [3.0]],
            array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn reference_against_itself_has_zero_margins() {
        let g = path3();
        let r = check_lemma1(&g, &g, &SolverConfig::default(), 0.0).unwrap();
        assert_eq!(r.diag_value, 0.0);
        assert_eq!(r.claim1_margin, Some(0.0));
        assert_eq!(r.claim2_margin, 0.0);
        assert!(r.claim2_ok && r.claim1_ok == Some(true));
    }

    #[test]
    fn identical_triple_has_zero_lhs() {
        let g = path3();
        let r = check_lemma2(&g, &g, &g, &SolverConfig::default(), 0.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.ok);
    }
}
