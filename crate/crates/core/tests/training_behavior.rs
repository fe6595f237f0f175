//! Trainer contracts: update-rule fidelity, shrinkage limits, determinism,
//! and CCCP's monotone descent under exact inference.

mod common;

use common::*;
use lvsm::objectives::{
    unified_gradient, unified_objective, Backend, FamilyPreset, ObjectiveConfig,
};
use lvsm::training::{cccp_train, sgd_train, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn zero_c_shrinks_geometrically_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let graph = random_tree(&mut rng, 4, 3);
    let data = vec![random_instance(&graph, &mut rng)];
    let cfg = TrainingConfig::sgd(40, 0.1);
    let obj = FamilyPreset::Mssvm.config(0.0, Backend::enumerate());
    let (w, trace) = sgd_train(&graph, &data, &cfg, &obj).unwrap();
    assert!(w.norm() == 0.0, "zero start stays zero under pure shrinkage");
    assert_eq!(trace.rows.len(), 40);
}

#[test]
fn one_sgd_step_is_exactly_the_update_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x57E9);
    let graph = random_tree(&mut rng, 5, 3);
    let data = vec![random_instance(&graph, &mut rng), random_instance(&graph, &mut rng)];
    let obj = FamilyPreset::Mssvm.config(1.0, Backend::enumerate());
    let eta = 0.05;
    let cfg = TrainingConfig::sgd(1, eta);
    let (w1, _) = sgd_train(&graph, &data, &cfg, &obj).unwrap();
    // by hand from w₀ = 0: w₁ = (1−η)·0 − η∇_data(0)
    let zero = lvsm::model::WeightVector::zeros(graph.template.dim);
    let g = unified_gradient(&graph, &zero, &data, &obj).unwrap();
    for (a, gk) in w1.values.iter().zip(&g) {
        assert_eq!(*a, -eta * gk, "update must match w←(1−η)w−η∇ bit for bit");
    }
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xDE7);
    let graph = random_tree(&mut rng, 5, 3);
    let data: Vec<_> = (0..3).map(|_| random_instance(&graph, &mut rng)).collect();
    let obj = FamilyPreset::Mssvm.config(1.0, Backend::enumerate());
    let cfg = TrainingConfig::sgd(10, 0.05);
    let (w_a, t_a) = sgd_train(&graph, &data, &cfg, &obj).unwrap();
    let (w_b, t_b) = sgd_train(&graph, &data, &cfg, &obj).unwrap();
    assert_eq!(w_a, w_b);
    let obj_a: Vec<f64> = t_a.rows.iter().map(|r| r.objective).collect();
    let obj_b: Vec<f64> = t_b.rows.iter().map(|r| r.objective).collect();
    assert_eq!(obj_a, obj_b);
}

#[test]
fn sgd_reduces_the_objective_on_an_easy_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xEA51);
    let graph = random_chain(&mut rng, 5, 2, 3);
    let data: Vec<_> = (0..4).map(|_| random_instance(&graph, &mut rng)).collect();
    let obj = FamilyPreset::Mssvm.config(1.0, Backend::enumerate());
    let cfg = TrainingConfig::sgd(60, 0.05);
    let (_, trace) = sgd_train(&graph, &data, &cfg, &obj).unwrap();
    let first = trace.rows.first().unwrap().objective;
    let last = trace.rows.last().unwrap().objective;
    assert!(last < first, "objective {first} → {last} did not improve");
}

#[test]
fn cccp_descends_monotonically_with_exact_inference() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCC9);
    for trial in 0..10 {
        let n = rng.gen_range(3..=6);
        let graph = random_tree(&mut rng, n, 3);
        let data: Vec<_> = (0..3).map(|_| random_instance(&graph, &mut rng)).collect();
        let preset = if trial % 2 == 0 { FamilyPreset::Mssvm } else { FamilyPreset::Lssvm };
        let obj = preset.config(1.0, Backend::enumerate());
        let mut cfg = TrainingConfig::cccp(5, 0.05);
        cfg.max_inner = 300;
        let (_, trace) = cccp_train(&graph, &data, &cfg, &obj).unwrap();
        let objectives: Vec<f64> = trace.rows.iter().map(|r| r.objective).collect();
        for pair in objectives.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-6,
                "trial {trial}: objective rose {} → {} across an outer iteration",
                pair[0],
                pair[1]
            );
        }
    }
}

#[test]
fn cccp_without_hidden_nodes_is_stationary_after_convergence() {
    // with no hidden variables the concave part is linear, so u stops
    // changing once the first outer iteration has converged
    let mut rng = ChaCha8Rng::seed_from_u64(0x40);
    let graph = {
        let mut g = random_chain(&mut rng, 4, 0, 3);
        g.validate().unwrap();
        g
    };
    let data: Vec<_> = (0..2).map(|_| random_instance(&graph, &mut rng)).collect();
    let obj = FamilyPreset::Hcrf.config(1.0, Backend::enumerate());
    let mut cfg = TrainingConfig::cccp(3, 0.1);
    cfg.max_inner = 2000;
    cfg.inner_tolerance = Some(1e-10);
    let (w, trace) = cccp_train(&graph, &data, &cfg, &obj).unwrap();
    let o1 = trace.rows[0].objective;
    let o2 = trace.rows[2].objective;
    assert!((o1 - o2).abs() < 1e-8, "objective moved after convergence: {o1} vs {o2}");
    // and the converged point is a stationary point of the true objective
    let g = unified_gradient(&graph, &w, &data, &obj).unwrap();
    let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(gn < 1e-6, "gradient norm {gn} at the CCCP fixed point");
}

#[test]
fn objective_trace_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7ACE);
    let graph = random_tree(&mut rng, 4, 3);
    let data: Vec<_> = (0..2).map(|_| random_instance(&graph, &mut rng)).collect();
    let obj = FamilyPreset::Mssvm.config(1.0, Backend::enumerate());
    let cfg = TrainingConfig::sgd(5, 0.05);
    let (w, trace) = sgd_train(&graph, &data, &cfg, &obj).unwrap();
    let direct = unified_objective(&graph, &w, &data, &obj).unwrap();
    assert!((trace.rows.last().unwrap().objective - direct).abs() < 1e-12);
}

#[test]
fn nonfinite_gradient_aborts_with_partial_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBAD);
    let graph = random_tree(&mut rng, 4, 3);
    let data = vec![random_instance(&graph, &mut rng)];
    let mut obj = FamilyPreset::Mssvm.config(1.0, Backend::enumerate());
    obj.c = f64::NAN;
    let cfg = TrainingConfig::sgd(5, 0.05);
    let err = sgd_train(&graph, &data, &cfg, &obj).unwrap_err();
    assert!(matches!(err.error, lvsm::Error::NonFiniteGradient(_)));
}
