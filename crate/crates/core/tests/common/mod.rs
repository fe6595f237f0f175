//! Shared helpers for the integration suites: random model draws and
//! direct brute-force oracles built on `feature_vector` + dot products,
//! deliberately bypassing the potential-table and enumeration code paths.

#![allow(dead_code)]

use lvsm::model::{
    FactorGraph, FeatureGroup, FeatureTemplate, Instance, Labels, Node, NodeId, Role,
    WeightVector,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Untied template: one unary group per node, one pairwise group per edge.
pub fn untied_template(nodes: &[Node], edges: &[(NodeId, NodeId)]) -> FeatureTemplate {
    let mut groups = Vec::new();
    let mut dim = 0;
    for (i, node) in nodes.iter().enumerate() {
        groups.push(FeatureGroup::Unary { members: vec![i], offset: dim });
        dim += node.cardinality;
    }
    for &(a, b) in edges {
        groups.push(FeatureGroup::Pairwise { members: vec![(a, b)], offset: dim });
        dim += nodes[a].cardinality * nodes[b].cardinality;
    }
    FeatureTemplate { groups, dim }
}

/// Random tree over `n` nodes (random cardinalities in 2..=max_card); node
/// i > 0 attaches to a random earlier node.  Roles are random with at least
/// one output node.
pub fn random_tree(rng: &mut impl Rng, n: usize, max_card: usize) -> FactorGraph {
    let nodes: Vec<Node> = (0..n)
        .map(|_| Node {
            role: if rng.gen_bool(0.5) { Role::Output } else { Role::Hidden },
            cardinality: rng.gen_range(2..=max_card),
        })
        .collect();
    let mut nodes = nodes;
    if nodes.iter().all(|nd| nd.role != Role::Output) {
        nodes[0].role = Role::Output;
    }
    let mut edges = Vec::new();
    for i in 1..n {
        let p = rng.gen_range(0..i);
        edges.push((p, i));
    }
    let template = untied_template(&nodes, &edges);
    let graph = FactorGraph { nodes, edges, template };
    graph.validate().unwrap();
    graph
}

/// n-node chain with `hidden` of the positions hidden (chosen at random).
pub fn random_chain(rng: &mut impl Rng, n: usize, hidden: usize, max_card: usize) -> FactorGraph {
    let mut idx: Vec<usize> = (0..n).collect();
    for k in 0..hidden.min(n) {
        let j = rng.gen_range(k..n);
        idx.swap(k, j);
    }
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            role: if idx[..hidden.min(n)].contains(&i) {
                Role::Hidden
            } else {
                Role::Output
            },
            cardinality: rng.gen_range(2..=max_card),
        })
        .collect();
    let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let template = untied_template(&nodes, &edges);
    let graph = FactorGraph { nodes, edges, template };
    graph.validate().unwrap();
    graph
}

/// Instance with random gold labels on output nodes and every hidden node
/// masked; no observed nodes expected in the graph.
pub fn random_instance(graph: &FactorGraph, rng: &mut impl Rng) -> Instance {
    let mut inst = Instance {
        x_values: Default::default(),
        y_labels: Labels::new(),
        hidden_mask: Default::default(),
    };
    for (i, node) in graph.nodes.iter().enumerate() {
        match node.role {
            Role::Output => {
                inst.y_labels.insert(i, rng.gen_range(0..node.cardinality));
            }
            Role::Hidden => {
                inst.hidden_mask.insert(i);
            }
            Role::Observed => unreachable!("test graphs carry no observed nodes"),
        }
    }
    inst
}

pub fn random_weights(graph: &FactorGraph, rng: &mut impl Rng, scale: f64) -> WeightVector {
    let normal = Normal::new(0.0, scale).unwrap();
    WeightVector {
        values: (0..graph.template.dim).map(|_| normal.sample(rng)).collect(),
    }
}

pub fn dot_sparse(w: &WeightVector, phi: &[(usize, f64)]) -> f64 {
    phi.iter().map(|&(i, v)| w.values[i] * v).sum()
}

/// Visits every joint assignment of `nodes` (given their cardinalities).
pub fn for_each_assignment(
    nodes: &[NodeId],
    cards: &[usize],
    mut f: impl FnMut(&Labels),
) {
    let mut state = vec![0usize; nodes.len()];
    loop {
        let labels: Labels = nodes.iter().cloned().zip(state.iter().cloned()).collect();
        f(&labels);
        let mut k = nodes.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            state[k] += 1;
            if state[k] < cards[k] {
                break;
            }
            state[k] = 0;
        }
    }
}

fn soft_or_max(scores: &[f64], eps: f64) -> f64 {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if eps < 1e-6 {
        return m;
    }
    let s: f64 = scores.iter().map(|&v| ((v - m) / eps).exp()).sum();
    m + eps * s.ln()
}

fn cards_of(graph: &FactorGraph, nodes: &[NodeId]) -> Vec<usize> {
    nodes.iter().map(|&n| graph.nodes[n].cardinality).collect()
}

/// Direct scan of `ε_h log Σ_h exp(w·φ(x, y, h)/ε_h)` for one fixed y.
pub fn direct_annealed_score(
    graph: &FactorGraph,
    w: &WeightVector,
    inst: &Instance,
    y: &Labels,
    eps_h: f64,
) -> f64 {
    let h_nodes: Vec<usize> = inst.hidden_mask.iter().cloned().collect();
    let h_cards = cards_of(graph, &h_nodes);
    let mut scores = Vec::new();
    for_each_assignment(&h_nodes, &h_cards, |h| {
        let phi = graph.feature_vector(inst, y, h).unwrap();
        scores.push(dot_sparse(w, &phi));
    });
    soft_or_max(&scores, eps_h)
}

/// Direct scan of the per-instance upper term
/// `ε_y log Σ_y exp{[Δ(y_i, y) + ε_h log Σ_h exp(w·φ/ε_h)] / ε_y}`.
pub fn direct_upper(
    graph: &FactorGraph,
    w: &WeightVector,
    inst: &Instance,
    eps_y: f64,
    eps_h: f64,
    with_loss: bool,
) -> f64 {
    let y_nodes: Vec<usize> = inst.y_labels.keys().cloned().collect();
    let y_cards = cards_of(graph, &y_nodes);
    let mut scores = Vec::new();
    for_each_assignment(&y_nodes, &y_cards, |y| {
        let mut v = direct_annealed_score(graph, w, inst, y, eps_h);
        if with_loss {
            v += y_nodes
                .iter()
                .filter(|&&n| y[&n] != inst.y_labels[&n])
                .count() as f64;
        }
        scores.push(v);
    });
    soft_or_max(&scores, eps_y)
}

/// Direct scan of the per-instance lower term
/// `ε_h log Σ_h exp(w·φ(x_i, y_i, h)/ε_h)`.
pub fn direct_lower(graph: &FactorGraph, w: &WeightVector, inst: &Instance, eps_h: f64) -> f64 {
    direct_annealed_score(graph, w, inst, &inst.y_labels, eps_h)
}

/// Direct marginal-MAP optimum: the best y and its annealed score.
pub fn direct_marginal_map(
    graph: &FactorGraph,
    w: &WeightVector,
    inst: &Instance,
    eps_h: f64,
) -> (Labels, f64) {
    let y_nodes: Vec<usize> = inst.y_labels.keys().cloned().collect();
    let y_cards = cards_of(graph, &y_nodes);
    let mut best: Option<(Labels, f64)> = None;
    for_each_assignment(&y_nodes, &y_cards, |y| {
        let v = direct_annealed_score(graph, w, inst, y, eps_h);
        if best.as_ref().map_or(true, |(_, bv)| v > *bv) {
            best = Some((y.clone(), v));
        }
    });
    best.unwrap()
}
