mod common;

use linfgw::cluster::adjusted_rand_index;
use linfgw::graph::{mixing_diameter, wl_propagate};
use linfgw::io::{dataset_from_json, dataset_to_json, load_tu_dataset, write_tu_dataset};
use linfgw::kernel::{gram_from_distances, KernelSource};
use linfgw::linear::{barycentric_project, embed, linear_fgw_distance};
use linfgw::ot::{evaluate_fgw_objective, solve_fgw, SolverConfig, MARGINAL_TOL};
use linfgw::{GraphDataset, MeasureGraph};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = MeasureGraph> {
    (1..=max_nodes, any::<u64>()).prop_map(|(m, seed)| common::random_graph(&mut ChaCha8Rng::seed_from_u64(seed), m))
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn graph_and_perm(max_nodes: usize) -> impl Strategy<Value = (MeasureGraph, Vec<usize>)> {
    graph_strategy(max_nodes).prop_flat_map(|g| {
        let n = g.num_nodes();
        (Just(g), perm_strategy(n))
    })
}

fn max_gap(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn plans_are_feasible((g1, g2) in (graph_strategy(6), graph_strategy(6)), alpha in 0.0..=1.0f64) {
        let r = solve_fgw(&g1, &g2, &SolverConfig::default().with_alpha(alpha)).unwrap();
        let (row, col) = r.plan.marginal_residuals();
        prop_assert!(row <= MARGINAL_TOL && col <= MARGINAL_TOL);
        prop_assert!(r.plan.coupling().iter().all(|&v| v >= 0.0));
        let direct = evaluate_fgw_objective(&g1, &g2, &r.plan, alpha).unwrap();
        prop_assert!((direct - r.value).abs() <= 1e-10);
    }

    #[test]
    fn solve_is_symmetric((g1, g2) in (graph_strategy(6), graph_strategy(6)), alpha in 0.0..=1.0f64) {
        let cfg = SolverConfig::default().with_alpha(alpha);
        let a = solve_fgw(&g1, &g2, &cfg).unwrap().value;
        let b = solve_fgw(&g2, &g1, &cfg).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn outer_objective_never_increases((g1, g2) in (graph_strategy(7), graph_strategy(7)), alpha in 0.0..=1.0f64) {
        let r = solve_fgw(&g1, &g2, &SolverConfig::default().with_alpha(alpha)).unwrap();
        for w in r.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-8, "{:?}", r.history);
        }
    }

    #[test]
    fn permuting_a_graph_permutes_the_plan((g1, perm) in graph_and_perm(6), g2 in graph_strategy(6), alpha in 0.0..=1.0f64) {
        let cfg = SolverConfig::default().with_alpha(alpha);
        let base = solve_fgw(&g1, &g2, &cfg).unwrap();
        let moved = solve_fgw(&g1.permuted(&perm).unwrap(), &g2, &cfg).unwrap();
        prop_assert!((base.value - moved.value).abs() <= 1e-8);
        let expected = base.plan.coupling().select(ndarray::Axis(0), &perm);
        prop_assert!(max_gap(&expected, moved.plan.coupling()) <= 1e-8);
    }

    #[test]
    fn objective_ignores_the_switched_off_term((g1, g2) in (graph_strategy(5), graph_strategy(5)), seed in any::<u64>()) {
        let plan = solve_fgw(&g1, &g2, &SolverConfig::default()).unwrap().plan;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let other = common::random_graph(&mut rng, g1.num_nodes());
        let refeatured = g1.with_features(other.features().to_owned()).unwrap();
        let restructured = g1.with_structure(other.structure().to_owned()).unwrap();
        let at = |g: &MeasureGraph, a| evaluate_fgw_objective(g, &g2, &plan, a).unwrap();
        prop_assert!((at(&g1, 1.0) - at(&refeatured, 1.0)).abs() <= 1e-12);
        prop_assert!((at(&g1, 0.0) - at(&restructured, 0.0)).abs() <= 1e-12);
    }

    #[test]
    fn wl_commutes_with_relabeling((g, perm) in graph_and_perm(7), depth in 0usize..3) {
        let a = wl_propagate(&g.permuted(&perm).unwrap(), depth).unwrap();
        let b = wl_propagate(&g, depth).unwrap().permuted(&perm).unwrap();
        prop_assert!(max_gap(&a.features().to_owned(), &b.features().to_owned()) <= 1e-12);
    }

    #[test]
    fn mixing_diameter_is_relabel_invariant_and_linear((g, perm) in graph_and_perm(6), a1 in 0.0..=1.0f64, a2 in 0.0..=1.0f64) {
        let p = g.permuted(&perm).unwrap();
        prop_assert_eq!(mixing_diameter(&g, a1), mixing_diameter(&p, a1));
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let feat = mixing_diameter(&g, 1.0);
        let structure = mixing_diameter(&g, 0.0);
        if feat > structure {
            prop_assert!(mixing_diameter(&g, lo) <= mixing_diameter(&g, hi) + 1e-12);
        } else {
            prop_assert!(mixing_diameter(&g, lo) + 1e-12 >= mixing_diameter(&g, hi));
        }
    }

    #[test]
    fn dataset_json_round_trip(graphs in prop::collection::vec(graph_strategy(6), 1..6)) {
        let ds = GraphDataset::new("rt", graphs, 1).unwrap();
        let back = dataset_from_json(&dataset_to_json(&ds).unwrap()).unwrap();
        prop_assert_eq!(back.len(), ds.len());
        for (a, b) in ds.graphs().iter().zip(back.graphs()) {
            prop_assert_eq!(a.num_nodes(), b.num_nodes());
            prop_assert_eq!(a.edges(), b.edges());
            prop_assert_eq!(a.features(), b.features());
        }
    }

    #[test]
    fn tu_files_round_trip(graphs in prop::collection::vec(graph_strategy(6), 1..6)) {
        let labeled: Vec<MeasureGraph> = graphs.into_iter().enumerate().map(|(i, g)| g.with_label(Some(i % 2))).collect();
        let ds = GraphDataset::new("RT", labeled, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_tu_dataset(&ds, dir.path()).unwrap();
        let back = load_tu_dataset(dir.path(), "RT").unwrap();
        prop_assert_eq!(back.len(), ds.len());
        for (a, b) in ds.graphs().iter().zip(back.graphs()) {
            prop_assert_eq!(a.num_nodes(), b.num_nodes());
            prop_assert_eq!(a.edges(), b.edges());
        }
    }

    #[test]
    fn gram_is_monotone_in_distance(values in prop::collection::vec(0.0..50.0f64, 10), gamma in 0.01..10.0f64) {
        let mut d = Array2::zeros((5, 5));
        let mut it = values.iter();
        for i in 0..5 {
            for j in (i + 1)..5 {
                let v = *it.next().unwrap();
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
        let k = gram_from_distances(d.view(), gamma, KernelSource::LinearFgw).unwrap();
        for a in d.iter().zip(k.values().iter()) {
            for b in d.iter().zip(k.values().iter()) {
                if a.0 < b.0 {
                    prop_assert!(a.1 >= b.1);
                }
            }
        }
    }

    #[test]
    fn ari_ignores_cluster_names(truth in prop::collection::vec(0usize..3, 2..30), shift in 1usize..5) {
        let renamed: Vec<usize> = truth.iter().map(|&l| (l + shift) * 7).collect();
        prop_assert!((adjusted_rand_index(&truth, &renamed).unwrap() - 1.0).abs() < 1e-12 || truth.iter().all(|&l| l == truth[0]));
    }

    #[test]
    fn embedding_distance_identity((reference, g1, g2) in (graph_strategy(5), graph_strategy(6), graph_strategy(6)), alpha in 0.0..=1.0f64) {
        let cfg = SolverConfig::default().with_alpha(alpha);
        let (e1, e2) = (embed(&reference, &g1, &cfg).unwrap(), embed(&reference, &g2, &cfg).unwrap());
        let k = reference.num_nodes();
        prop_assert_eq!(e1.len(), k * 2 + k * k);
        let sigma = reference.measure();
        let flat: Array1<f64> = e1.weighted_flat(sigma).unwrap() - e2.weighted_flat(sigma).unwrap();
        let d = linear_fgw_distance(&e1, &e2, sigma).unwrap();
        prop_assert!((flat.dot(&flat) - d).abs() <= 1e-10);
        prop_assert_eq!(linear_fgw_distance(&e1, &e1, sigma).unwrap(), 0.0);
        prop_assert_eq!(d, linear_fgw_distance(&e2, &e1, sigma).unwrap());
    }

    #[test]
    fn surrogates_stay_inside_the_source_hull((reference, g) in (graph_strategy(5), graph_strategy(6))) {
        let plan = solve_fgw(&reference, &g, &SolverConfig::default()).unwrap().plan;
        let s = barycentric_project(&reference, &g, &plan).unwrap();
        let x = g.features();
        for c in 0..x.ncols() {
            let col = x.column(c);
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            for &v in s.projected_features().column(c) {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
        let a = g.structure();
        let (lo, hi) = a.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        prop_assert!(s.projected_structure().iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
    }
}
