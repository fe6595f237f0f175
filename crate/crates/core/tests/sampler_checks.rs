//! Joint samplers against enumeration: chi-square on a small tree, marginal
//! bands for the Gibbs chain on a loopy grid.

mod common;

use common::*;
use lvsm::inference::{enumerate, Query};
use lvsm::model::{FactorGraph, Node, Role};
use lvsm::simulation::{joint_potentials, sample_instances, GibbsOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn all_output_graph(nodes: usize, card: usize, edges: Vec<(usize, usize)>) -> FactorGraph {
    let nodes: Vec<Node> = (0..nodes)
        .map(|_| Node { role: Role::Output, cardinality: card })
        .collect();
    let template = untied_template(&nodes, &edges);
    let graph = FactorGraph { nodes, edges, template };
    graph.validate().unwrap();
    graph
}

#[test]
fn exact_tree_sampler_passes_chi_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5A3);
    let graph = all_output_graph(3, 2, vec![(0, 1), (1, 2)]);
    let w = random_weights(&graph, &mut rng, 1.0);
    let pot = joint_potentials(&graph, &w).unwrap();
    let probs = {
        let r = enumerate(&pot, &Query::LogPartition, 24).unwrap();
        let z = r.log_partition;
        let mut p = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    p.push((pot.energy(&[a, b, c]) - z).exp());
                }
            }
        }
        p
    };
    let n = 100_000usize;
    let samples =
        sample_instances(&graph, &w, n, &GibbsOptions::default(), &mut rng).unwrap();
    let mut counts = [0usize; 8];
    for s in &samples {
        let idx = s.y_labels[&0] * 4 + s.y_labels[&1] * 2 + s.y_labels[&2];
        counts[idx] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e) * (c as f64 - e) / e
        })
        .sum();
    // 7 degrees of freedom, p = 0.01 critical value
    assert!(chi2 < 18.475, "chi-square statistic {chi2}");
}

#[test]
fn gibbs_marginals_match_enumeration_on_a_loopy_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x91B5);
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
    let graph = all_output_graph(9, 2, edges);
    let w = random_weights(&graph, &mut rng, 0.8);
    let pot = joint_potentials(&graph, &w).unwrap();
    assert!(!pot.is_forest(), "grid must exercise the Gibbs path");
    let truth = enumerate(&pot, &Query::Marginals, 24).unwrap();
    let n = 10_000usize;
    let opts = GibbsOptions { burn_in: 1000, thin: 10 };
    let samples = sample_instances(&graph, &w, n, &opts, &mut rng).unwrap();
    for node in 0..9 {
        let ones: usize = samples.iter().filter(|s| s.y_labels[&node] == 1).count();
        let p = ones as f64 / n as f64;
        let t = truth.node_beliefs[node][1];
        assert!((p - t).abs() < 0.02, "node {node}: empirical {p} vs exact {t}");
    }
}
