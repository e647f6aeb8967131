//! Test-side oracles written against the objective's definition, sharing no
//! code with the library solvers.
#![allow(dead_code)]

use linfgw::synthetic::erdos_renyi;
use linfgw::MeasureGraph;
use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_graph(rng: &mut ChaCha8Rng, m: usize) -> MeasureGraph {
    erdos_renyi(rng, m, 0.5, 2, 0.0, 1.0, None).unwrap()
}

pub fn random_sized(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> MeasureGraph {
    let m = rng.random_range(lo..=hi);
    random_graph(rng, m)
}

/// `sum_{i,j,k,l} [(1-a)|x_i - y_j|^2 + a (A_ik - B_jl)^2] p_ij p_kl`.
pub fn quartic_objective(g1: &MeasureGraph, g2: &MeasureGraph, p: &Array2<f64>, alpha: f64) -> f64 {
    let (x, y, a, b) = (g1.features(), g2.features(), g1.structure(), g2.structure());
    let (m, n) = p.dim();
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            let feat: f64 = x.row(i).iter().zip(y.row(j)).map(|(u, v)| (u - v) * (u - v)).sum();
            for k in 0..m {
                for l in 0..n {
                    let s = a[[i, k]] - b[[j, l]];
                    total += ((1.0 - alpha) * feat + alpha * s * s) * p[[i, j]] * p[[k, l]];
                }
            }
        }
    }
    total
}

fn find(parent: &mut [usize], v: usize) -> usize {
    let mut r = v;
    while parent[r] != r {
        r = parent[r];
    }
    r
}

/// Solve a spanning-tree support by repeatedly peeling leaves.
fn peel(cells: &[(usize, usize)], mu: ArrayView1<'_, f64>, nu: ArrayView1<'_, f64>) -> Option<Array2<f64>> {
    let (m, n) = (mu.len(), nu.len());
    let mut left: Vec<f64> = mu.iter().chain(nu.iter()).copied().collect();
    let mut open = vec![true; cells.len()];
    let mut p = Array2::zeros((m, n));
    for _ in 0..cells.len() {
        let mut degree = vec![0usize; m + n];
        for (c, &(i, j)) in cells.iter().enumerate() {
            if open[c] {
                degree[i] += 1;
                degree[m + j] += 1;
            }
        }
        let (c, leaf) = cells.iter().enumerate().find_map(|(c, &(i, j))| {
            if !open[c] {
                None
            } else if degree[i] == 1 {
                Some((c, i))
            } else if degree[m + j] == 1 {
                Some((c, m + j))
            } else {
                None
            }
        })?;
        let (i, j) = cells[c];
        let other = if leaf == i { m + j } else { i };
        let v = left[leaf];
        p[[i, j]] = v;
        left[leaf] = 0.0;
        left[other] -= v;
        open[c] = false;
    }
    if p.iter().any(|&v| v < -1e-12) {
        return None;
    }
    Some(p.mapv(|v| v.max(0.0)))
}

/// All vertices of the transport polytope, from every acyclic support of
/// size `m + n - 1` (grown cell by cell with a union-find cycle check).
pub fn polytope_vertices(mu: ArrayView1<'_, f64>, nu: ArrayView1<'_, f64>) -> Vec<Array2<f64>> {
    let (m, n) = (mu.len(), nu.len());
    let all: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let mut out: Vec<Array2<f64>> = Vec::new();
    let mut chosen = Vec::new();
    fn grow(
        start: usize,
        all: &[(usize, usize)],
        chosen: &mut Vec<(usize, usize)>,
        need: usize,
        m: usize,
        mu: ArrayView1<'_, f64>,
        nu: ArrayView1<'_, f64>,
        out: &mut Vec<Array2<f64>>,
    ) {
        if chosen.len() == need {
            if let Some(p) = peel(chosen, mu, nu) {
                if !out.iter().any(|q| q.iter().zip(p.iter()).all(|(a, b)| (a - b).abs() < 1e-12)) {
                    out.push(p);
                }
            }
            return;
        }
        for c in start..all.len() {
            if all.len() - c < need - chosen.len() {
                break;
            }
            let mut parent: Vec<usize> = (0..m + nu.len()).collect();
            let mut acyclic = true;
            for &(i, j) in chosen.iter().chain(std::iter::once(&all[c])) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, m + j));
                if ri == rj {
                    acyclic = false;
                    break;
                }
                parent[ri] = rj;
            }
            if acyclic {
                chosen.push(all[c]);
                grow(c + 1, all, chosen, need, m, mu, nu, out);
                chosen.pop();
            }
        }
    }
    grow(0, &all, &mut chosen, m + n - 1, m, mu, nu, &mut out);
    out
}

fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

struct Quadratic {
    linear: Array2<f64>,
    /// (A_ik - B_jl)^2 indexed [i, j, k, l] as flat (i*n + j, k*n + l)
    tensor: Array2<f64>,
    alpha: f64,
}

impl Quadratic {
    fn new(g1: &MeasureGraph, g2: &MeasureGraph, alpha: f64) -> Self {
        let (x, y, a, b) = (g1.features(), g2.features(), g1.structure(), g2.structure());
        let (m, n) = (g1.num_nodes(), g2.num_nodes());
        let linear = Array2::from_shape_fn((m, n), |(i, j)| {
            (1.0 - alpha) * x.row(i).iter().zip(y.row(j)).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()
        });
        let tensor = Array2::from_shape_fn((m * n, m * n), |(r, c)| {
            let (i, j, k, l) = (r / n, r % n, c / n, c % n);
            (a[[i, k]] - b[[j, l]]).powi(2)
        });
        Self { linear, tensor, alpha }
    }

    fn apply(&self, p: &Array2<f64>) -> Array2<f64> {
        let flat = p.iter().copied().collect::<ndarray::Array1<f64>>();
        self.tensor.dot(&flat).into_shape_with_order(p.dim()).unwrap()
    }

    fn gradient(&self, p: &Array2<f64>) -> Array2<f64> {
        &self.linear + &(self.apply(p) * (2.0 * self.alpha))
    }

    fn curvature(&self, d: &Array2<f64>) -> f64 {
        self.alpha * inner(d, &self.apply(d))
    }
}

/// Pairwise Frank-Wolfe over the vertex atoms from an initial mixture.
fn pairwise_fw(q: &Quadratic, atoms: &[Array2<f64>], mut weights: Vec<f64>) -> Array2<f64> {
    let mix = |w: &[f64]| {
        let mut p = Array2::zeros(atoms[0].dim());
        for (a, &wi) in atoms.iter().zip(w) {
            if wi > 0.0 {
                p.scaled_add(wi, a);
            }
        }
        p
    };
    for _ in 0..5_000 {
        let p = mix(&weights);
        let g = q.gradient(&p);
        let scores: Vec<f64> = atoms.iter().map(|a| inner(&g, a)).collect();
        let s = (0..atoms.len()).min_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        let away = (0..atoms.len())
            .filter(|&i| weights[i] > 0.0)
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap();
        let slope = scores[s] - scores[away];
        if slope > -1e-13 {
            break;
        }
        let d = &atoms[s] - &atoms[away];
        let curv = q.curvature(&d);
        let cap = weights[away];
        let step = if curv > 0.0 { (-slope / (2.0 * curv)).min(cap) } else { cap };
        weights[s] += step;
        weights[away] -= step;
        if weights[away] < 1e-15 {
            weights[away] = 0.0;
        }
    }
    mix(&weights)
}

/// Global FGW estimate for tiny graphs: best vertex, then pairwise
/// Frank-Wolfe from the best vertices and from the barycenter of all
/// vertices. Returns the lowest quartic objective found.
pub fn oracle_fgw(g1: &MeasureGraph, g2: &MeasureGraph, alpha: f64) -> f64 {
    let atoms = polytope_vertices(g1.measure(), g2.measure());
    let q = Quadratic::new(g1, g2, alpha);
    let mut values: Vec<(f64, usize)> = atoms
        .iter()
        .enumerate()
        .map(|(i, a)| (quartic_objective(g1, g2, a, alpha), i))
        .collect();
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = values[0].0;
    let mut starts: Vec<Vec<f64>> = values
        .iter()
        .take(16)
        .map(|&(_, i)| {
            let mut w = vec![0.0; atoms.len()];
            w[i] = 1.0;
            w
        })
        .collect();
    starts.push(vec![1.0 / atoms.len() as f64; atoms.len()]);
    for w in starts {
        let p = pairwise_fw(&q, &atoms, w);
        best = best.min(quartic_objective(g1, g2, &p, alpha));
    }
    best
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}
