//! Belief propagation against exhaustive enumeration on random trees, where
//! both must agree to tight tolerances.

mod common;

use std::collections::BTreeSet;

use common::*;
use lvsm::inference::{
    enumerate, max_product, mixed_product, sum_product, weighted_product, BpOptions, Query,
    VariableWeights,
};
use lvsm::model::Role;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sum_and_max_product_are_exact_on_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACE1);
    let opts = BpOptions::default();
    for trial in 0..200 {
        let n = rng.gen_range(2..=10);
        let graph = random_tree(&mut rng, n, 4);
        let inst = random_instance(&graph, &mut rng);
        let w = random_weights(&graph, &mut rng, 1.0);
        let pot = graph.condition(&w, &inst).unwrap();

        let truth = enumerate(&pot, &Query::Marginals, 24).unwrap();
        let bp = sum_product(&pot, &opts);
        assert!(bp.converged, "trial {trial}: sum-product did not converge");
        assert!(
            (bp.log_partition - truth.log_partition).abs() < 1e-8,
            "trial {trial}: log Z {} vs {}",
            bp.log_partition,
            truth.log_partition
        );
        for (b, t) in bp.node_beliefs.iter().zip(&truth.node_beliefs) {
            for (x, y) in b.iter().zip(t) {
                assert!((x - y).abs() < 1e-8, "trial {trial}: marginal {x} vs {y}");
            }
        }
        for (b, t) in bp.edge_beliefs.iter().zip(&truth.edge_beliefs) {
            for (x, y) in b.iter().zip(t) {
                assert!((x - y).abs() < 1e-8, "trial {trial}: edge marginal {x} vs {y}");
            }
        }

        let map = enumerate(&pot, &Query::Map, 24).unwrap();
        let mp = max_product(&pot, &opts);
        assert!(
            (mp.log_partition - map.log_partition).abs() < 1e-10,
            "trial {trial}: MAP energy {} vs {}",
            mp.log_partition,
            map.log_partition
        );
    }
}

#[test]
fn weighted_product_matches_annealed_enumeration_on_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEE2);
    let opts = BpOptions::default();
    for _ in 0..50 {
        let n = rng.gen_range(2..=8);
        let graph = random_tree(&mut rng, n, 3);
        let inst = random_instance(&graph, &mut rng);
        let w = random_weights(&graph, &mut rng, 1.0);
        let pot = graph.condition(&w, &inst).unwrap();
        for eps in [1.0, 0.5, 0.1] {
            // uniform temperature ε: value must equal ε·logZ(θ/ε)
            let weights = VariableWeights {
                rho: vec![eps; pot.num_nodes()],
            };
            let wp = weighted_product(&pot, &weights, &opts);
            let scaled = pot.scale(1.0 / eps);
            let truth = eps
                * enumerate(&scaled, &Query::LogPartition, 24)
                    .unwrap()
                    .log_partition;
            assert!(
                (wp.log_partition - truth).abs() < 1e-7,
                "eps {eps}: {} vs {truth}",
                wp.log_partition
            );
        }
    }
}

#[test]
fn mixed_product_solves_marginal_map_on_most_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE);
    let opts = BpOptions::default();
    let mut exact = 0usize;
    let trials = 100;
    for trial in 0..trials {
        let graph = random_chain(&mut rng, 8, 4, 4);
        let inst = random_instance(&graph, &mut rng);
        let w = random_weights(&graph, &mut rng, 1.0);
        let pot = graph.condition(&w, &inst).unwrap();
        let y_set: BTreeSet<usize> = inst.y_labels.keys().cloned().collect();

        let weights = VariableWeights::mixed(&pot, &y_set, 1.0);
        let bp = mixed_product(&pot, &weights, &opts);
        let y_bp: lvsm::model::Labels = bp
            .decoding
            .clone()
            .unwrap()
            .into_iter()
            .filter(|(n, _)| y_set.contains(n))
            .collect();

        let (y_star, v_star) = direct_marginal_map(&graph, &w, &inst, 1.0);
        if y_bp == y_star {
            exact += 1;
        } else {
            let v_bp = direct_annealed_score(&graph, &w, &inst, &y_bp, 1.0);
            assert!(
                (v_star - v_bp).abs() <= 0.02 * v_star.abs().max(1.0),
                "trial {trial}: decoded score {v_bp} too far from optimum {v_star}"
            );
        }
    }
    assert!(exact >= 90, "only {exact}/{trials} chains decoded exactly");
}

#[test]
fn mixed_product_value_matches_enumeration_on_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1CE);
    let opts = BpOptions::default();
    for trial in 0..50 {
        let graph = random_chain(&mut rng, 6, 3, 3);
        let inst = random_instance(&graph, &mut rng);
        let w = random_weights(&graph, &mut rng, 1.0);
        let pot = graph.condition(&w, &inst).unwrap();
        let y_set: BTreeSet<usize> = inst.y_labels.keys().cloned().collect();
        let bp = mixed_product(&pot, &VariableWeights::mixed(&pot, &y_set, 1.0), &opts);
        let y_bp: lvsm::model::Labels = bp
            .decoding
            .clone()
            .unwrap()
            .into_iter()
            .filter(|(n, _)| y_set.contains(n))
            .collect();
        // the reported value must be the decoded labels' annealed score
        let direct = direct_annealed_score(&graph, &w, &inst, &y_bp, 1.0);
        assert!(
            (bp.log_partition - direct).abs() < 1e-7,
            "trial {trial}: value {} vs direct {direct}",
            bp.log_partition
        );
    }
}

#[test]
fn sum_product_converges_on_a_loopy_grid() {
    // 3×3 single-layer grid: not exact, but must converge and stay sane
    let mut rng = ChaCha8Rng::seed_from_u64(0xF00D);
    let nodes: Vec<lvsm::model::Node> = (0..9)
        .map(|_| lvsm::model::Node { role: Role::Output, cardinality: 2 })
        .collect();
    let mut edges = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            let i = r * 3 + c;
            if c < 2 {
                edges.push((i, i + 1));
            }
            if r < 2 {
                edges.push((i, i + 3));
            }
        }
    }
    let template = untied_template(&nodes, &edges);
    let graph = lvsm::model::FactorGraph { nodes, edges, template };
    graph.validate().unwrap();
    let inst = random_instance(&graph, &mut rng);
    let w = random_weights(&graph, &mut rng, 0.5);
    let pot = graph.condition(&w, &inst).unwrap();
    let bp = sum_product(&pot, &BpOptions::default());
    assert!(bp.converged);
    let truth = enumerate(&pot, &Query::LogPartition, 24).unwrap();
    // Bethe approximation: loose sanity band only
    assert!((bp.log_partition - truth.log_partition).abs() < 1.0);
    for b in &bp.node_beliefs {
        let s: f64 = b.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}
