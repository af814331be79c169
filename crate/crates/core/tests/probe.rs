mod common;

use common::{naive_angular, naive_outputs, probe_from, random_matrix, synthetic_data, Embedding};
use nalgebra::DMatrix;
use polarprobe::acts::ActivationRecord;
use polarprobe::gen::sample_grid_graph;
use polarprobe::graph::{Domain, RelationalGraph};
use polarprobe::probe::{
    batch_loss, graph_loss, soft_spearman, train, GraphTarget, PolarProbe, SoftRankConfig, TrainConfig,
};
use polarprobe::rng::stream;
use polarprobe::schema::DomainSchema;
use proptest::prelude::*;

fn spatial(seed: u64, n: usize) -> RelationalGraph {
    let schema = DomainSchema::builtin(Domain::Spatial);
    sample_grid_graph(&schema, false, n, 2, &mut stream(seed, &[])).unwrap().graph
}

#[test]
fn forward_matches_double_loop_on_small_random_case() {
    let (n, d, k, t) = (4, 8, 3, 2);
    let b = random_matrix(k, d, 1);
    let p = random_matrix(k, t, 2);
    let h32: Vec<f32> = random_matrix(n, d, 3).transpose().iter().map(|&x| x as f32).collect();
    let record = ActivationRecord::new("s", 0, n, d, h32.clone()).unwrap();
    let probe = probe_from(b.clone(), p.clone());
    let out = probe.forward(&record).unwrap();
    let h = DMatrix::from_row_slice(n, d, &h32.iter().map(|&x| x as f64).collect::<Vec<_>>());
    let (dist, cos) = naive_outputs(&b, &p, &h);
    for i in 0..n {
        for j in 0..n {
            assert!((out.distance(i, j) - dist[i][j]).abs() <= 1e-6);
            for r in 0..t {
                assert!((out.incidence(i, j, r) - cos[i][j][r]).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn losses_match_enumeration() {
    let soft = SoftRankConfig::default();
    let schema = DomainSchema::builtin(Domain::Spatial);
    let (d, k) = (6, 3);
    let probe = probe_from(random_matrix(k, d, 10), random_matrix(k, 2, 11));
    let mut per_graph = Vec::new();
    let mut losses = Vec::new();
    for seed in 0..4 {
        let g = spatial(seed, 5);
        let directional = schema.directional_types(&g);
        let target = GraphTarget::new("g", &g, &directional).unwrap();
        let h = random_matrix(5, d, 100 + seed);
        let l = graph_loss(&probe, &h, &target, &soft, true);
        let (dist, cos) = naive_outputs(&probe.b, &probe.prototypes, &h);
        let upper: Vec<f64> = (0..5).flat_map(|i| ((i + 1)..5).map(move |j| (i, j))).map(|(i, j)| dist[i][j]).collect();
        let structural = 1.0 - soft_spearman(&upper, &target.gold_upper, &soft).value;
        let angular = naive_angular(&cos, &g, &directional).unwrap();
        assert!((l.structural - structural).abs() <= 1e-9);
        assert!((l.angular.unwrap() - angular).abs() <= 1e-6);
        per_graph.push((structural, angular));
        losses.push(l);
    }
    let batch = batch_loss(&probe, &losses, 5.0);
    let ms = per_graph.iter().map(|x| x.0).sum::<f64>() / 4.0;
    let ma = per_graph.iter().map(|x| x.1).sum::<f64>() / 4.0;
    assert!((batch.structural - ms).abs() <= 1e-12);
    assert!((batch.angular - ma).abs() <= 1e-12);
    assert!((batch.total - (ms + 5.0 * ma)).abs() <= 1e-12);
}

#[test]
fn constant_prediction_gives_unit_structural_loss() {
    let g = spatial(0, 4);
    let schema = DomainSchema::builtin(Domain::Spatial);
    let target = GraphTarget::new("g", &g, &schema.directional_types(&g)).unwrap();
    let probe = probe_from(random_matrix(2, 3, 1), random_matrix(2, 2, 2));
    let h = DMatrix::from_element(4, 3, 0.5);
    let l = graph_loss(&probe, &h, &target, &SoftRankConfig::default(), true);
    assert_eq!(l.structural, 1.0);
    assert!(l.degenerate);
    assert!(l.grad_b_structural.unwrap().iter().all(|&x| x == 0.0));
}

/// Central differences of the batch objective.
fn finite_difference(probe: &PolarProbe, graphs: &[(DMatrix<f64>, GraphTarget)], lambda: f64, soft: &SoftRankConfig) -> (DMatrix<f64>, DMatrix<f64>) {
    let total = |p: &PolarProbe| {
        let losses: Vec<_> = graphs.iter().map(|(h, t)| graph_loss(p, h, t, soft, false)).collect();
        batch_loss(p, &losses, lambda).total
    };
    let step = 1e-6;
    let mut gb = DMatrix::zeros(probe.k(), probe.d());
    for idx in 0..gb.len() {
        let mut plus = probe.clone();
        plus.b[idx] += step;
        let mut minus = probe.clone();
        minus.b[idx] -= step;
        gb[idx] = (total(&plus) - total(&minus)) / (2.0 * step);
    }
    let mut gp = DMatrix::zeros(probe.k(), probe.t());
    for idx in 0..gp.len() {
        let mut plus = probe.clone();
        plus.prototypes[idx] += step;
        let mut minus = probe.clone();
        minus.prototypes[idx] -= step;
        gp[idx] = (total(&plus) - total(&minus)) / (2.0 * step);
    }
    (gb, gp)
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

#[test]
fn gradients_match_finite_differences_on_random_instances() {
    let soft = SoftRankConfig::default();
    let schema = DomainSchema::builtin(Domain::Spatial);
    for seed in 0..5 {
        let (d, k) = (5, 3);
        let probe = probe_from(random_matrix(k, d, 20 + seed), random_matrix(k, 2, 30 + seed));
        let graphs: Vec<(DMatrix<f64>, GraphTarget)> = (0..2)
            .map(|g| {
                let graph = spatial(seed * 10 + g, 4 + g as usize);
                let target = GraphTarget::new("g", &graph, &schema.directional_types(&graph)).unwrap();
                (random_matrix(graph.n(), d, 40 + seed * 10 + g), target)
            })
            .collect();
        let losses: Vec<_> = graphs.iter().map(|(h, t)| graph_loss(&probe, h, t, &soft, true)).collect();
        let batch = batch_loss(&probe, &losses, 5.0);
        let (fb, fp) = finite_difference(&probe, &graphs, 5.0, &soft);
        let gp = batch.grad_prototypes.unwrap();
        assert!(rel_err(&batch.grad_b.unwrap(), &fb) <= 1e-4, "seed {seed}");
        for c in 0..2 {
            let a = gp.column(c).into_owned();
            let f = fp.column(c).into_owned();
            assert!((&a - &f).norm() / a.norm().max(f.norm()) <= 1e-4, "seed {seed} prototype {c}");
        }
    }
}

#[test]
fn zero_lambda_leaves_prototypes_untouched() {
    let spec = common::spec(Domain::Ordinality, 0, [(6, 2), (0, 0), (0, 0)]);
    let [train_data, _, _] = synthetic_data(&spec, 16, Embedding::Planted { sigma: 0.1 }, 0);
    let init = PolarProbe::init(4, 16, 1, &mut stream(0, &[])).unwrap();
    let cfg = TrainConfig {
        lambda: 0.0,
        learning_rate: 1e-2,
        epochs: 5,
        rank: 4,
        batch_graphs: 2,
        ..Default::default()
    };
    let out = train(init.clone(), &train_data, None, &cfg).unwrap();
    assert_eq!(out.probe.prototypes, init.prototypes);
    assert_ne!(out.probe.b, init.b);

    let g = &train_data.graphs[0];
    let l = graph_loss(&init, &g.samples[0].h, &g.target, &cfg.soft_rank(), true);
    let batch = batch_loss(&init, &[l], 0.0);
    assert!(batch.grad_prototypes.unwrap().iter().all(|&x| x == 0.0));
}

fn assert_non_increasing_after_five(domain: Domain, batch_graphs: usize) {
    let spec = common::spec(domain, 0, [(30, 20), (0, 0), (0, 0)]);
    let [train_data, _, _] = synthetic_data(&spec, 64, Embedding::Planted { sigma: 0.0 }, 1);
    let init = PolarProbe::init(8, 64, train_data.t(), &mut stream(3, &[])).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        rank: 8,
        epochs: 100,
        batch_graphs,
        ..Default::default()
    };
    let out = train(init, &train_data, None, &cfg).unwrap();
    let totals: Vec<f64> = out.history.iter().map(|h| h.train_total).collect();
    for e in 6..totals.len() {
        assert!(totals[e] <= totals[e - 1], "{domain}: epoch {e} loss {} > {}", totals[e], totals[e - 1]);
    }
}

#[test]
fn planted_ordinality_loss_is_non_increasing_after_epoch_five() {
    assert_non_increasing_after_five(Domain::Ordinality, 8);
}

#[test]
fn planted_spatial_loss_is_non_increasing_after_epoch_five() {
    assert_non_increasing_after_five(Domain::Spatial, 8);
}

#[test]
fn training_is_independent_of_worker_count() {
    let spec = common::spec(Domain::Spatial, 5, [(8, 3), (3, 2), (0, 0)]);
    let [train_data, val, _] = synthetic_data(&spec, 12, Embedding::Planted { sigma: 0.3 }, 2);
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        rank: 4,
        epochs: 4,
        batch_graphs: 3,
        ..Default::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let init = PolarProbe::init(4, 12, 2, &mut stream(0, &[])).unwrap();
            train(init, &train_data, Some(&val), &cfg).unwrap()
        })
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.probe.b, four.probe.b);
    assert_eq!(one.probe.prototypes, four.probe.prototypes);
    assert_eq!(one.history, four.history);
}

fn probe_case() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    (2usize..6, 1usize..7, 1usize..5, 1usize..4, any::<u64>()).prop_map(|(n, d, k, t, seed)| {
        let k = k.min(d);
        (random_matrix(k, d, seed), random_matrix(k, t, seed ^ 1), random_matrix(n, d, seed ^ 2))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn forward_matches_oracle((b, p, h) in probe_case()) {
        let out = probe_from(b.clone(), p.clone()).forward_matrix(&h);
        let (dist, cos) = naive_outputs(&b, &p, &h);
        for i in 0..h.nrows() {
            for j in 0..h.nrows() {
                prop_assert!((out.distance(i, j) - dist[i][j]).abs() <= 1e-9 * (1.0 + dist[i][j]));
                prop_assert_eq!(out.distance(i, j), out.distance(j, i));
                for r in 0..p.ncols() {
                    prop_assert!((out.incidence(i, j, r) - cos[i][j][r]).abs() <= 1e-9);
                    prop_assert_eq!(out.incidence(i, j, r), -out.incidence(j, i, r));
                    prop_assert!(out.incidence(i, j, r).abs() <= 1.0);
                }
            }
            prop_assert_eq!(out.distance(i, i), 0.0);
        }
    }

    #[test]
    fn scaling_the_map_scales_distances_only((b, p, h) in probe_case(), c in 0.01f64..100.0, exp in -8i32..8) {
        let base = probe_from(b.clone(), p.clone()).forward_matrix(&h);
        let scaled = probe_from(&b * c, p.clone()).forward_matrix(&h);
        // Powers of two scale without rounding.
        let pow2 = 2f64.powi(exp);
        let exact = probe_from(&b * pow2, p.clone()).forward_matrix(&h);
        for i in 0..h.nrows() {
            for j in 0..h.nrows() {
                prop_assert!((scaled.distance(i, j) - c * base.distance(i, j)).abs() <= 1e-12 * c * (1.0 + base.distance(i, j)));
                prop_assert_eq!(exact.distance(i, j), pow2 * base.distance(i, j));
                for r in 0..p.ncols() {
                    // Below the cosine guard the incidence shrinks with the norms.
                    let floor = base.distance(i, j) * p.column(r).norm() * c.min(1.0) * 2f64.powi(exp.min(0));
                    if floor <= 1e-7 {
                        continue;
                    }
                    prop_assert!((scaled.incidence(i, j, r) - base.incidence(i, j, r)).abs() <= 1e-12);
                    prop_assert_eq!(exact.incidence(i, j, r), base.incidence(i, j, r));
                }
            }
        }
    }
}
