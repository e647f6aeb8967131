mod common;

use common::{oracle_fgw, permutations, quartic_objective, random_graph, random_sized};
use linfgw::barycenter::{averaged, barycenter_objective, compute_barycenter, BarycenterConfig};
use linfgw::cluster::{adjusted_rand_index, kmeans_embeddings, spectral_clustering};
use linfgw::cv::{cross_validate, Candidate, CvConfig, ParamGrid};
use linfgw::kernel::{gram_from_distances, KernelSource};
use linfgw::linear::{
    barycentric_project, diagonal_objective, distance_matrix, embed, embed_dataset, linear_fgw_distance,
    pairwise_linear_fgw, GraphEmbedding,
};
use linfgw::ot::{evaluate_fgw_objective, feature_cost_matrix, solve_fgw, solve_wasserstein, SolverConfig, TransportPlan};
use linfgw::synthetic::{dense_vs_sparse, generate, ClassSpec, SyntheticSpec};
use linfgw::{GraphDataset, MeasureGraph};
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random feasible coupling: Sinkhorn scaling of a random positive matrix,
/// carried out here rather than by the library.
fn random_coupling(rng: &mut ChaCha8Rng, mu: &Array1<f64>, nu: &Array1<f64>) -> Array2<f64> {
    let mut p = Array2::from_shape_fn((mu.len(), nu.len()), |_| rng.random_range(0.1..1.0));
    for _ in 0..2_000 {
        for (mut row, &target) in p.outer_iter_mut().zip(mu) {
            let s = row.sum();
            row *= target / s;
        }
        for (mut col, &target) in p.axis_iter_mut(ndarray::Axis(1)).zip(nu) {
            let s = col.sum();
            col *= target / s;
        }
    }
    p
}

#[test]
fn tensorized_objective_matches_quartic_loop() {
    let mut r = rng(11);
    for _ in 0..20 {
        let g1 = random_graph(&mut r, 3);
        let g2 = random_sized(&mut r, 2, 4);
        let p = random_coupling(&mut r, &g1.measure().to_owned(), &g2.measure().to_owned());
        let plan = TransportPlan::new(p.clone(), g1.measure().to_owned(), g2.measure().to_owned()).unwrap();
        for alpha in [0.0, 0.5, 1.0] {
            let fast = evaluate_fgw_objective(&g1, &g2, &plan, alpha).unwrap();
            let slow = quartic_objective(&g1, &g2, &p, alpha);
            assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
        }
    }
}

#[test]
fn two_node_pairs_match_grid_scan() {
    let mut r = rng(12);
    for _ in 0..10 {
        let g1 = random_graph(&mut r, 2);
        let g2 = random_graph(&mut r, 2);
        let alpha = r.random_range(0.0..=1.0);
        // couplings [[t, 1/2 - t], [1/2 - t, t]], t in [0, 1/2]
        let steps = 100_000;
        let grid_min = (0..=steps)
            .map(|s| {
                let t = 0.5 * s as f64 / steps as f64;
                quartic_objective(&g1, &g2, &array![[t, 0.5 - t], [0.5 - t, t]], alpha)
            })
            .fold(f64::INFINITY, f64::min);
        let v = solve_fgw(&g1, &g2, &SolverConfig::default().with_alpha(alpha)).unwrap().value;
        assert!(v <= grid_min * 1.02 + 1e-12, "solver {v} vs grid {grid_min}");
        assert!(v >= grid_min - 1e-9, "solver {v} below grid {grid_min}");
    }
}

#[test]
fn square_wasserstein_matches_permutation_enumeration() {
    let mut r = rng(13);
    let uniform = Array1::from_elem(4, 0.25);
    for _ in 0..20 {
        let cost = Array2::from_shape_fn((4, 4), |_| r.random_range(0.0..5.0));
        let lp = permutations(4)
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| 0.25 * cost[[i, j]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let v = solve_wasserstein(&cost, uniform.view(), uniform.view(), &SolverConfig::default()).unwrap().value;
        assert!(v <= lp * 1.02 + 1e-12, "solver {v} vs LP {lp}");
        assert!(v >= lp - 1e-9);
    }
}

/// The product start is a fixed point for some symmetric pairs (a
/// vertex-transitive target at alpha = 1 gives constant cost rows), so a
/// small share of pairs may stay at a local minimum.
#[test]
fn tiny_pairs_reach_the_vertex_oracle() {
    let mut r = rng(14);
    let mut close = 0;
    for _ in 0..30 {
        let g1 = random_sized(&mut r, 1, 3);
        let g2 = random_sized(&mut r, 1, 3);
        let alpha = r.random_range(0.0..=1.0);
        let oracle = oracle_fgw(&g1, &g2, alpha);
        let v = solve_fgw(&g1, &g2, &SolverConfig::default().with_alpha(alpha)).unwrap().value;
        assert!(v >= oracle - 1e-6, "solver {v} below oracle {oracle}");
        close += usize::from(v <= (oracle * 1.1).max(oracle + 1e-3));
    }
    assert!(close >= 27, "{close} of 30 pairs near the oracle");
}

#[test]
fn product_start_is_stuck_on_path_versus_edge() {
    // documents the fixed point: P3 against K2 at alpha = 1
    let p3 = MeasureGraph::uniform(
        Array2::zeros((3, 1)),
        array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
        None,
    )
    .unwrap();
    let k2 = MeasureGraph::uniform(Array2::zeros((2, 1)), array![[0.0, 1.0], [1.0, 0.0]], None).unwrap();
    let r = solve_fgw(&p3, &k2, &SolverConfig::default().with_alpha(1.0)).unwrap();
    assert!((r.value - 0.5).abs() < 1e-12);
    assert!((oracle_fgw(&p3, &k2, 1.0) - 5.0 / 18.0).abs() < 1e-12);
}

#[test]
fn pairwise_matrix_matches_looped_distances() {
    let mut r = rng(15);
    let graphs: Vec<MeasureGraph> = (0..20).map(|_| random_sized(&mut r, 3, 7)).collect();
    let ds = GraphDataset::new("loop", graphs, 1).unwrap();
    let reference = random_graph(&mut r, 4);
    let cfg = SolverConfig::default();
    let d = pairwise_linear_fgw(&ds, &reference, &cfg).unwrap();
    let e: Vec<GraphEmbedding> = ds.graphs().iter().map(|g| embed(&reference, g, &cfg).unwrap()).collect();
    for i in 0..20 {
        assert_eq!(d[[i, i]], 0.0);
        for j in 0..20 {
            let looped = linear_fgw_distance(&e[i], &e[j], reference.measure()).unwrap();
            assert!((d[[i, j]] - looped).abs() < 1e-12);
        }
    }
}

#[test]
fn barycenter_objective_is_sum_of_solves() {
    let mut r = rng(16);
    let graphs: Vec<MeasureGraph> = (0..5).map(|_| random_sized(&mut r, 3, 6)).collect();
    let ds = GraphDataset::new("sum", graphs, 1).unwrap();
    let reference = random_graph(&mut r, 4);
    let cfg = SolverConfig::default();
    let total = barycenter_objective(&reference, &ds, &cfg).unwrap();
    let looped: f64 = ds.graphs().iter().map(|g| solve_fgw(g, &reference, &cfg).unwrap().value).sum();
    assert!((total - looped).abs() < 1e-12);
}

#[test]
fn linear_distance_is_diagonal_objective_between_surrogates() {
    let mut r = rng(17);
    for alpha in [0.0, 0.3, 1.0] {
        let cfg = SolverConfig::default().with_alpha(alpha);
        let reference = random_graph(&mut r, 4);
        let (g1, g2) = (random_sized(&mut r, 3, 6), random_sized(&mut r, 3, 6));
        let s1 = barycentric_project(&reference, &g1, &solve_fgw(&reference, &g1, &cfg).unwrap().plan).unwrap();
        let s2 = barycentric_project(&reference, &g2, &solve_fgw(&reference, &g2, &cfg).unwrap().plan).unwrap();
        let diag = TransportPlan::diagonal(reference.measure());
        let between = evaluate_fgw_objective(&s1.to_measure_graph().unwrap(), &s2.to_measure_graph().unwrap(), &diag, alpha).unwrap();
        let e1 = embed(&reference, &g1, &cfg).unwrap();
        let e2 = embed(&reference, &g2, &cfg).unwrap();
        let d = linear_fgw_distance(&e1, &e2, reference.measure()).unwrap();
        assert!((d - between).abs() < 1e-10, "{d} vs {between}");
        // closed form against the reference
        let closed = diagonal_objective(&reference, &s1, alpha).unwrap();
        let direct = evaluate_fgw_objective(&reference, &s1.to_measure_graph().unwrap(), &diag, alpha).unwrap();
        assert!((closed - direct).abs() < 1e-12);
    }
}

#[test]
fn isomorphic_copies_embed_identically() {
    let mut r = rng(18);
    let cfg = SolverConfig::default();
    for _ in 0..5 {
        let reference = random_graph(&mut r, 4);
        let g = random_graph(&mut r, 6);
        let mut perm: Vec<usize> = (0..6).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
        let a = embed(&reference, &g, &cfg).unwrap().concatenated();
        let b = embed(&reference, &g.permuted(&perm).unwrap(), &cfg).unwrap().concatenated();
        let gap = (&a - &b).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
        assert!(gap < 1e-6, "gap {gap}");
    }
}

#[test]
fn barycenter_update_is_average_of_surrogates() {
    let mut r = rng(19);
    let graphs: Vec<MeasureGraph> = (0..4).map(|_| random_sized(&mut r, 3, 6)).collect();
    let ds = GraphDataset::new("avg", graphs, 1).unwrap();
    let bary = random_graph(&mut r, 3);
    let cfg = SolverConfig::default();
    let plans: Vec<_> = ds.graphs().iter().map(|g| solve_fgw(&bary, g, &cfg).unwrap()).collect();
    let updated = averaged(&bary, &ds, &plans).unwrap();
    let mut z = Array2::<f64>::zeros((3, 2));
    let mut c = Array2::<f64>::zeros((3, 3));
    for (g, p) in ds.graphs().iter().zip(&plans) {
        let pi = p.plan.coupling();
        let sigma = bary.measure();
        for k in 0..3 {
            for i in 0..g.num_nodes() {
                for f in 0..2 {
                    z[[k, f]] += 0.25 * pi[[k, i]] * g.features()[[i, f]] / sigma[k];
                }
            }
            for l in 0..3 {
                let mut s = 0.0;
                for i in 0..g.num_nodes() {
                    for j in 0..g.num_nodes() {
                        s += pi[[k, i]] * pi[[l, j]] * g.structure()[[i, j]];
                    }
                }
                c[[k, l]] += 0.25 * s / (sigma[k] * sigma[l]);
            }
        }
    }
    assert!((&updated.features() - &z).iter().all(|v| v.abs() < 1e-12));
    assert!((&updated.structure() - &c).iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn barycenter_descends_and_stays_symmetric() {
    let ds = dense_vs_sparse(6, 5, 8, 4).unwrap();
    let b = compute_barycenter(&ds, &BarycenterConfig::default(), &SolverConfig::default()).unwrap();
    for w in b.history.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "history {:?}", b.history);
    }
    let s = b.graph.structure();
    assert!((&s - &s.t()).iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn feature_cost_matches_loop() {
    let mut r = rng(20);
    let g1 = random_graph(&mut r, 3);
    let g2 = random_graph(&mut r, 4);
    let d = feature_cost_matrix(&g1, &g2).unwrap();
    for i in 0..3 {
        for j in 0..4 {
            let direct: f64 = (0..2).map(|f| (g1.features()[[i, f]] - g2.features()[[j, f]]).powi(2)).sum();
            assert!((d[[i, j]] - direct).abs() < 1e-12);
        }
    }
}

#[test]
fn separated_blobs_split_cleanly() {
    let mut r = rng(21);
    let e: Vec<GraphEmbedding> = (0..20)
        .map(|i| {
            let centre = if i < 10 { 0.0 } else { 50.0 };
            GraphEmbedding {
                node_block: Array1::from_shape_fn(4, |_| centre + r.random_range(-1.0..1.0)),
                edge_block: Array1::from_shape_fn(4, |_| r.random_range(-1.0..1.0)),
                alpha: 0.5,
                reference_id: "blobs".into(),
                feature_dim: 2,
            }
        })
        .collect();
    let sigma = array![0.5, 0.5];
    let labels = kmeans_embeddings(&e, sigma.view(), 2, 0).unwrap();
    let truth: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
    assert_eq!(adjusted_rand_index(&truth, &labels).unwrap(), 1.0);
    assert_eq!(kmeans_embeddings(&e, sigma.view(), 1, 0).unwrap(), vec![0; 20]);
}

#[test]
fn block_affinity_is_recovered() {
    let k = Array2::from_shape_fn((6, 6), |(i, j)| if (i < 3) == (j < 3) { 1.0 } else { 1e-6 });
    let d = k.mapv(|v: f64| -v.ln());
    let g = gram_from_distances(d.view(), 1.0, KernelSource::LinearFgw).unwrap();
    let labels = spectral_clustering(&g, 2, 0).unwrap();
    assert_eq!(labels, vec![0, 0, 0, 1, 1, 1]);
    assert_eq!(spectral_clustering(&g, 1, 0).unwrap(), vec![0; 6]);
}

fn linear_candidate(ds: &GraphDataset, alpha: f64) -> Candidate {
    let cfg = SolverConfig::default().with_alpha(alpha);
    let b = compute_barycenter(ds, &BarycenterConfig::default(), &cfg).unwrap();
    let e = embed_dataset(ds, &b.graph, &cfg).unwrap();
    Candidate {
        alpha,
        depth: 0,
        distances: distance_matrix(&e, b.graph.measure()).unwrap(),
        source: KernelSource::LinearFgw,
    }
}

#[test]
fn cv_separates_dense_from_sparse() {
    let ds = dense_vs_sparse(20, 6, 10, 8).unwrap();
    let labels = ds.labels().unwrap();
    let cfg = CvConfig {
        repeats: 1,
        ..CvConfig::default()
    };
    let report = cross_validate(&[linear_candidate(&ds, 1.0)], &labels, &ParamGrid::default(), &cfg).unwrap();
    assert!(report.mean >= 0.95, "accuracy {}", report.mean);
}

#[test]
fn feature_driven_labels_prefer_alpha_zero() {
    let class = |mean| ClassSpec {
        count: 15,
        min_nodes: 5,
        max_nodes: 8,
        edge_prob: 0.4,
        feature_mean: mean,
        feature_std: 0.5,
    };
    let ds = generate(&SyntheticSpec {
        name: "features".into(),
        feature_dim: 2,
        classes: vec![class(0.0), class(1.5)],
        seed: 9,
    })
    .unwrap();
    let labels = ds.labels().unwrap();
    let candidates = [linear_candidate(&ds, 0.0), linear_candidate(&ds, 1.0)];
    let cfg = CvConfig {
        folds: 5,
        repeats: 1,
        ..CvConfig::default()
    };
    let report = cross_validate(&candidates, &labels, &ParamGrid::default(), &cfg).unwrap();
    let best = report.grid_scores.iter().map(|s| s.accuracy).fold(0.0, f64::max);
    let best_zero = report
        .grid_scores
        .iter()
        .filter(|s| s.alpha == 0.0)
        .map(|s| s.accuracy)
        .fold(0.0, f64::max);
    assert_eq!(best_zero, best);
}

