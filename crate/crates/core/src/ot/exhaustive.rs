//! Global FGW search for tiny instances.
//!
//! Enumerates every vertex of the transportation polytope `Pi(mu, nu)` and
//! runs away-step Frank-Wolfe from the best vertices. Only meant for the
//! handful-of-nodes problems used to check the linearization lemmas.

use ndarray::{Array2, ArrayView1, ArrayView2};
#[cfg(test)]
use ndarray::Array1;

use super::cost::{cross_term, feature_cost_matrix, frob, objective_of_coupling, structure_cost_constant};
use super::{FgwResult, TransportPlan};
use crate::error::{Error, Result};
use crate::graph::MeasureGraph;

/// Limits for [`minimize_fgw`].
#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Refuse instances with more basis candidates than this.
    pub max_bases: usize,
    /// Number of best vertices used as local-search starts.
    pub starts: usize,
    pub max_iters: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            max_bases: 200_000,
            starts: 64,
            max_iters: 20_000,
        }
    }
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k.min(n));
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Every vertex of `Pi(mu, nu)`, each a basic feasible solution supported on
/// a spanning tree of the complete bipartite graph.
pub fn transport_vertices(mu: ArrayView1<'_, f64>, nu: ArrayView1<'_, f64>, max_bases: usize) -> Result<Vec<Array2<f64>>> {
    let (m, n) = (mu.len(), nu.len());
    let cells = m * n;
    let k = m + n - 1;
    match binomial(cells, k) {
        Some(c) if c <= max_bases => {}
        _ => {
            return Err(Error::Usage(format!(
                "{m}x{n} transport polytope is too large for vertex enumeration"
            )))
        }
    }
    let mut out: Vec<Array2<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if let Some(v) = solve_basis(&idx, mu, nu) {
            if !out.iter().any(|w| max_abs_diff(w, &v) < 1e-12) {
                out.push(v);
            }
        }
        // next combination
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if idx[pos] < cells - k + pos {
                break;
            }
        }
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Leaf-peel the support; `None` unless it is a spanning tree with a
/// nonnegative solution.
fn solve_basis(support: &[usize], mu: ArrayView1<'_, f64>, nu: ArrayView1<'_, f64>) -> Option<Array2<f64>> {
    let (m, n) = (mu.len(), nu.len());
    let mut row_left = mu.to_owned();
    let mut col_left = nu.to_owned();
    let mut alive: Vec<(usize, usize)> = support.iter().map(|&c| (c / n, c % n)).collect();
    let mut plan = Array2::zeros((m, n));
    let mut row_deg = vec![0usize; m];
    let mut col_deg = vec![0usize; n];
    for &(i, j) in &alive {
        row_deg[i] += 1;
        col_deg[j] += 1;
    }
    while !alive.is_empty() {
        let leaf = alive
            .iter()
            .position(|&(i, _)| row_deg[i] == 1)
            .map(|p| (p, true))
            .or_else(|| alive.iter().position(|&(_, j)| col_deg[j] == 1).map(|p| (p, false)));
        let (p, by_row) = leaf?;
        let (i, j) = alive.swap_remove(p);
        let x = if by_row { row_left[i] } else { col_left[j] };
        if x < -1e-12 {
            return None;
        }
        let x = x.max(0.0);
        plan[[i, j]] = x;
        row_left[i] -= x;
        col_left[j] -= x;
        row_deg[i] -= 1;
        col_deg[j] -= 1;
    }
    let tol = 1e-12;
    if row_left.iter().chain(col_left.iter()).any(|r| r.abs() > tol) {
        return None;
    }
    Some(plan)
}

/// Quadratic FGW objective restricted to `Pi(mu, nu)`:
/// `E(pi) = <L, pi> - 2a <A pi B^T, pi>` with `L = (1-a) D + a C_12`.
struct Quadratic<'a> {
    linear: Array2<f64>,
    a: ArrayView2<'a, f64>,
    b: ArrayView2<'a, f64>,
    alpha: f64,
}

impl Quadratic<'_> {
    fn value(&self, pi: &Array2<f64>) -> f64 {
        let mut v = frob(&self.linear, pi);
        if self.alpha > 0.0 {
            v -= 2.0 * self.alpha * frob(&cross_term(self.a, pi, self.b), pi);
        }
        v
    }

    fn gradient(&self, pi: &Array2<f64>) -> Array2<f64> {
        let mut g = self.linear.clone();
        if self.alpha > 0.0 {
            let fwd = cross_term(self.a, pi, self.b);
            let back = self.a.t().dot(pi).dot(&self.b);
            g.scaled_add(-2.0 * self.alpha, &fwd);
            g.scaled_add(-2.0 * self.alpha, &back);
        }
        g
    }

    /// Coefficient of `t^2` along direction `d`.
    fn curvature(&self, d: &Array2<f64>) -> f64 {
        if self.alpha > 0.0 {
            -2.0 * self.alpha * frob(&cross_term(self.a, d, self.b), d)
        } else {
            0.0
        }
    }
}

/// Away-step Frank-Wolfe over a fixed vertex set, starting from the convex
/// combination `weights`.
fn away_step_fw(q: &Quadratic<'_>, vertices: &[Array2<f64>], mut weights: Vec<f64>, max_iters: usize) -> (Array2<f64>, f64) {
    let combine = |w: &[f64]| {
        let mut x = Array2::zeros(vertices[0].dim());
        for (v, &wv) in vertices.iter().zip(w) {
            if wv > 0.0 {
                x.scaled_add(wv, v);
            }
        }
        x
    };
    let mut x = combine(&weights);
    for _ in 0..max_iters {
        let g = q.gradient(&x);
        let scores: Vec<f64> = vertices.iter().map(|v| frob(&g, v)).collect();
        let gx = frob(&g, &x);
        let s = (0..vertices.len())
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .expect("nonempty vertex set");
        let a = (0..vertices.len())
            .filter(|&i| weights[i] > 0.0)
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .expect("nonempty active set");
        let fw_gap = gx - scores[s];
        let away_gap = scores[a] - gx;
        if fw_gap.max(away_gap) <= 1e-15 {
            break;
        }
        let toward = fw_gap >= away_gap;
        let (dir, max_step) = if toward {
            (&vertices[s] - &x, 1.0)
        } else {
            let wa = weights[a];
            (&x - &vertices[a], wa / (1.0 - wa))
        };
        let slope = frob(&g, &dir);
        if slope >= 0.0 {
            break;
        }
        let curv = q.curvature(&dir);
        let step = if curv > 0.0 {
            (-slope / (2.0 * curv)).min(max_step)
        } else {
            max_step
        };
        if step <= 0.0 {
            break;
        }
        if toward {
            weights.iter_mut().for_each(|w| *w *= 1.0 - step);
            weights[s] += step;
        } else {
            weights.iter_mut().for_each(|w| *w *= 1.0 + step);
            weights[a] -= step;
            if step == max_step {
                weights[a] = 0.0;
            }
        }
        weights.iter_mut().for_each(|w| {
            if *w < 1e-15 {
                *w = 0.0
            }
        });
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        x = combine(&weights);
    }
    let value = q.value(&x);
    (x, value)
}

/// Best FGW coupling found by vertex enumeration plus local refinement.
///
/// Exact on instances whose minimizer is a vertex; otherwise the best of
/// several stationary points. The plan has exact marginals and `value` is
/// its objective.
pub fn minimize_fgw(g1: &MeasureGraph, g2: &MeasureGraph, alpha: f64, opts: &SearchOptions) -> Result<FgwResult> {
    let (mu, nu) = (g1.measure(), g2.measure());
    let vertices = transport_vertices(mu, nu, opts.max_bases)?;
    let d = if g1.feature_dim() > 0 {
        feature_cost_matrix(g1, g2)?
    } else {
        Array2::zeros((g1.num_nodes(), g2.num_nodes()))
    };
    let mut linear = d.mapv(|v| (1.0 - alpha) * v);
    if alpha > 0.0 {
        linear.scaled_add(alpha, &structure_cost_constant(g1.structure(), g2.structure(), mu, nu));
    }
    let q = Quadratic {
        linear,
        a: g1.structure(),
        b: g2.structure(),
        alpha,
    };
    let nv = vertices.len();
    let mut ranked: Vec<(usize, f64)> = vertices.iter().enumerate().map(|(i, v)| (i, q.value(v))).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut best: Option<(Array2<f64>, f64)> = None;
    let mut consider = |x: Array2<f64>, v: f64| {
        if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
            best = Some((x, v));
        }
    };
    for &(i, _) in ranked.iter().take(opts.starts) {
        let mut w = vec![0.0; nv];
        w[i] = 1.0;
        let (x, v) = away_step_fw(&q, &vertices, w, opts.max_iters);
        consider(x, v);
    }
    let (x, v) = away_step_fw(&q, &vertices, vec![1.0 / nv as f64; nv], opts.max_iters);
    consider(x, v);

    let (plan, _) = best.expect("at least one start");
    let value = objective_of_coupling(g1, g2, &plan, alpha, Some(&d))?;
    Ok(FgwResult {
        value,
        plan: TransportPlan::from_parts_unchecked(plan, mu.to_owned(), nu.to_owned()),
        converged: true,
        residual: 0.0,
        history: vec![value],
    })
}
