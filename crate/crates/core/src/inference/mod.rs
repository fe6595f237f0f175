//! Inference over [`LogPotentials`]: belief propagation (sum / max / mixed /
//! temperature-weighted) and an exhaustive enumeration oracle.
//!
//! All arithmetic is in log space.  Per-variable temperatures ρ select the
//! reduction semantics: ρ = 1 is ordinary summation, ρ below
//! [`TEMP_SNAP`](crate::math::TEMP_SNAP) is exact maximization, anything in
//! between is the annealed (power) reduction `ρ·log Σ exp(·/ρ)`.

pub mod bp;
pub mod enumerate;

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::math::TEMP_SNAP;
use crate::model::{Instance, Labels, LogPotentials, NodeId};

pub use bp::{max_product, mixed_product, sum_product, weighted_product, BpOptions};
pub use enumerate::{enumerate, Query, DEFAULT_STATE_CAP_LOG2};

/// Per-variable temperatures, aligned with `LogPotentials::node_ids`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableWeights {
    pub rho: Vec<f64>,
}

impl VariableWeights {
    pub fn all_sum(pot: &LogPotentials) -> Self {
        VariableWeights { rho: vec![1.0; pot.num_nodes()] }
    }

    pub fn all_max(pot: &LogPotentials) -> Self {
        VariableWeights { rho: vec![0.0; pot.num_nodes()] }
    }

    /// Max semantics (ρ = 0) on `max_nodes` (graph ids), temperature `eps`
    /// elsewhere.
    pub fn mixed(pot: &LogPotentials, max_nodes: &BTreeSet<NodeId>, eps: f64) -> Self {
        let rho = pot
            .node_ids
            .iter()
            .map(|n| if max_nodes.contains(n) { 0.0 } else { eps })
            .collect();
        VariableWeights { rho }
    }

    /// Temperature `eps_y` on `y_nodes`, `eps_h` elsewhere.
    pub fn split(
        pot: &LogPotentials,
        y_nodes: &BTreeSet<NodeId>,
        eps_y: f64,
        eps_h: f64,
    ) -> Self {
        let rho = pot
            .node_ids
            .iter()
            .map(|n| if y_nodes.contains(n) { eps_y } else { eps_h })
            .collect();
        VariableWeights { rho }
    }

    pub fn is_max(&self, i: usize) -> bool {
        self.rho[i] < TEMP_SNAP
    }
}

/// Output of an inference query.
///
/// `log_partition` depends on the query: log Z for sum-product, the decoded
/// assignment's energy for max-product, the annealed score of the decoded
/// configuration for mixed-product.  Beliefs are aligned with the potentials
/// the query ran on.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceResult {
    pub node_beliefs: Vec<Vec<f64>>,
    pub edge_beliefs: Vec<Vec<f64>>,
    pub log_partition: f64,
    /// Assignment over max-semantics nodes, keyed by graph node id.
    pub decoding: Option<Labels>,
    pub converged: bool,
    pub iterations: usize,
}

/// Adds `scale` to every non-gold label of every labeled output node, so the
/// returned potentials score `energy(y, h) + scale · Δ(y_i, y)` with Δ the
/// Hamming loss against the instance's gold labels.
pub fn loss_augment(pot: &LogPotentials, inst: &Instance, scale: f64) -> LogPotentials {
    let mut out = pot.clone();
    for (&n, &gold) in &inst.y_labels {
        if let Some(i) = out.local_index(n) {
            for s in 0..out.cards[i] {
                if s != gold {
                    out.unary[i][s] += scale;
                }
            }
        }
    }
    out
}

/// Re-expands a result computed on `pot.clamp(fixed)` to full-size beliefs
/// over `pot`: clamped nodes become point masses and edges touching them
/// become outer products.
pub fn expand_clamped(
    pot: &LogPotentials,
    fixed: &Labels,
    sub_pot: &LogPotentials,
    sub: &InferenceResult,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut node_beliefs: Vec<Vec<f64>> = Vec::with_capacity(pot.num_nodes());
    let mut sub_i = 0usize;
    let mut sub_of: Vec<Option<usize>> = vec![None; pot.num_nodes()];
    for (i, &n) in pot.node_ids.iter().enumerate() {
        match fixed.get(&n) {
            Some(&l) => {
                let mut b = vec![0.0; pot.cards[i]];
                b[l] = 1.0;
                node_beliefs.push(b);
            }
            None => {
                debug_assert_eq!(sub_pot.node_ids[sub_i], n);
                sub_of[i] = Some(sub_i);
                node_beliefs.push(sub.node_beliefs[sub_i].clone());
                sub_i += 1;
            }
        }
    }
    let mut edge_beliefs: Vec<Vec<f64>> = Vec::with_capacity(pot.edges.len());
    let mut sub_e = 0usize;
    for &(u, v) in &pot.edges {
        let (cu, cv) = (pot.cards[u], pot.cards[v]);
        match (sub_of[u], sub_of[v]) {
            (None, None) | (None, Some(_)) | (Some(_), None) => {
                let mut t = vec![0.0; cu * cv];
                for su in 0..cu {
                    for sv in 0..cv {
                        t[su * cv + sv] = node_beliefs[u][su] * node_beliefs[v][sv];
                    }
                }
                edge_beliefs.push(t);
            }
            (Some(_), Some(_)) => {
                edge_beliefs.push(sub.edge_beliefs[sub_e].clone());
                sub_e += 1;
            }
        }
    }
    (node_beliefs, edge_beliefs)
}

/// Annealed conditional `p^{ε}(h | fixed)` via BP: clamps `fixed`, runs
/// temperature-`eps` sum-product over everything else, and reports full-size
/// beliefs plus the annealed log-partition `ε·log Σ_h exp(E/ε)` (exact max
/// below the snap threshold).
pub fn clamped_annealed_bp(
    pot: &LogPotentials,
    fixed: &Labels,
    eps: f64,
    opts: &BpOptions,
) -> Result<InferenceResult> {
    let sub_pot = pot.clamp(fixed)?;
    let sub = if eps < TEMP_SNAP {
        // joint max over h; beliefs are point masses at the decoding
        max_product(&sub_pot, opts)
    } else {
        // beliefs of the 1/ε-scaled run are exactly the annealed marginals
        let scaled = sub_pot.scale(1.0 / eps);
        let mut r = sum_product(&scaled, opts);
        r.log_partition *= eps;
        r
    };
    let (node_beliefs, edge_beliefs) = expand_clamped(pot, fixed, &sub_pot, &sub);
    Ok(InferenceResult {
        node_beliefs,
        edge_beliefs,
        log_partition: sub.log_partition,
        decoding: None,
        converged: sub.converged,
        iterations: sub.iterations,
    })
}
