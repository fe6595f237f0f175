//! Held-out evaluation: per-node accuracy of the annealed marginal-MAP
//! predictor and the marginal test log-likelihood
//! `Σ_i [log Σ_h exp(w·φ(x_i, y_i, h)) − log Σ_{y,h} exp(w·φ(x_i, y, h))]`.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inference::bp::sum_product;
use crate::inference::enumerate::{enumerate, Query};
use crate::inference::clamped_annealed_bp;
use crate::model::{hamming_loss, FactorGraph, Instance, WeightVector};
use crate::objectives::{predict, Backend};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy_pct: f64,
    pub hamming_errors: usize,
    pub labeled_nodes: usize,
    /// Marginal log-likelihood of the gold labels, summed over instances.
    pub test_loglik: f64,
}

pub fn evaluate(
    graph: &FactorGraph,
    w: &WeightVector,
    data: &[Instance],
    eps_h: f64,
    backend: &Backend,
) -> Result<EvalReport> {
    let mut wrong = 0usize;
    let mut total = 0usize;
    let mut loglik = 0.0;
    for inst in data {
        let pred = predict(graph, w, inst, eps_h, backend)?;
        let nodes: Vec<usize> = inst.y_labels.keys().cloned().collect();
        wrong += hamming_loss(&inst.y_labels, &pred, &nodes)?;
        total += nodes.len();

        let pot = graph.condition(w, inst)?;
        let (clamped, full) = match backend {
            Backend::Enumerate { cap_log2 } => {
                let sub = pot.clamp(&inst.y_labels)?;
                (
                    enumerate(&sub, &Query::LogPartition, *cap_log2)?.log_partition,
                    enumerate(&pot, &Query::LogPartition, *cap_log2)?.log_partition,
                )
            }
            Backend::Bp(opts) => (
                clamped_annealed_bp(&pot, &inst.y_labels, 1.0, opts)?.log_partition,
                sum_product(&pot, opts).log_partition,
            ),
        };
        loglik += clamped - full;
    }
    let accuracy_pct = if total == 0 {
        100.0
    } else {
        100.0 * (1.0 - wrong as f64 / total as f64)
    };
    Ok(EvalReport {
        accuracy_pct,
        hamming_errors: wrong,
        labeled_nodes: total,
        test_loglik: loglik,
    })
}
