//! The temperature-unified training objective and its (sub-)gradient.
//!
//! The per-instance data term is the difference of two annealed log-sum-exp
//! values,
//!
//! ```text
//! U_i⁺ = ε_y log Σ_y exp{ [Δ(y_i, y) + ε_h log Σ_h exp(w·φ(x_i, y, h)/ε_h)] / ε_y }
//! U_i⁻ = ε_h log Σ_h exp( w·φ(x_i, y_i, h) / ε_h )
//! ```
//!
//! and the full objective is `½‖w‖² + C·Σ_i (U_i⁺ − U_i⁻)`.  Temperatures at
//! or below the snap threshold are evaluated with exact max operators, never
//! with tiny exponentials, which reproduces the marginal and latent
//! structured-SVM objectives exactly in the ε→0 limits.  The gradient is the
//! difference of feature expectations under the annealed joint and under the
//! gold-clamped conditional.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inference::{
    clamped_annealed_bp, enumerate, expand_clamped, loss_augment, mixed_product, weighted_product,
    BpOptions, Query, VariableWeights, DEFAULT_STATE_CAP_LOG2,
};
use crate::inference::enumerate::annealed_value;
use crate::math::TEMP_SNAP;
use crate::model::{expected_features, hamming_loss, FactorGraph, Instance, Labels, WeightVector};

/// The pair (ε_y, ε_h) selecting the family member.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperaturePair {
    pub eps_y: f64,
    pub eps_h: f64,
}

impl TemperaturePair {
    pub fn new(eps_y: f64, eps_h: f64) -> Self {
        TemperaturePair { eps_y, eps_h }
    }

    pub fn is_max_y(&self) -> bool {
        self.eps_y < TEMP_SNAP
    }

    pub fn is_max_h(&self) -> bool {
        self.eps_h < TEMP_SNAP
    }
}

/// Named family members and their temperature/loss settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyPreset {
    /// ε_y→0, ε_h=1: marginal structured SVM.
    Mssvm,
    /// ε_y→0, ε_h→0: latent structured SVM (joint MAP).
    Lssvm,
    /// ε_y=1, ε_h=1, Δ≡0: hidden CRF likelihood.
    Hcrf,
    /// ε_y=1, ε_h=1 with the loss term kept.
    LossAugmentedLikelihood,
    /// ε_y = ε_h = ε ∈ (0, 1).
    EpsExtension(f64),
}

impl FamilyPreset {
    pub fn temps(&self) -> TemperaturePair {
        match self {
            FamilyPreset::Mssvm => TemperaturePair::new(0.0, 1.0),
            FamilyPreset::Lssvm => TemperaturePair::new(0.0, 0.0),
            FamilyPreset::Hcrf | FamilyPreset::LossAugmentedLikelihood => {
                TemperaturePair::new(1.0, 1.0)
            }
            FamilyPreset::EpsExtension(e) => TemperaturePair::new(*e, *e),
        }
    }

    pub fn loss_enabled(&self) -> bool {
        !matches!(self, FamilyPreset::Hcrf)
    }

    pub fn config(&self, c: f64, backend: Backend) -> ObjectiveConfig {
        ObjectiveConfig {
            c,
            temps: self.temps(),
            loss_enabled: self.loss_enabled(),
            backend,
        }
    }
}

/// Inference backend used by objective, gradient and predictor.
#[derive(Clone, Copy, Debug)]
pub enum Backend {
    Bp(BpOptions),
    Enumerate { cap_log2: u32 },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Bp(BpOptions::default())
    }
}

impl Backend {
    pub fn enumerate() -> Self {
        Backend::Enumerate { cap_log2: DEFAULT_STATE_CAP_LOG2 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ObjectiveConfig {
    /// Regularization weight C (multiplies the summed data terms).
    pub c: f64,
    pub temps: TemperaturePair,
    pub loss_enabled: bool,
    pub backend: Backend,
}

fn labeled_set(inst: &Instance) -> BTreeSet<usize> {
    inst.y_labels.keys().cloned().collect()
}

/// The convex part `U_i⁺` of the per-instance data term (without ½‖w‖²).
pub fn instance_upper_term(
    graph: &FactorGraph,
    w: &WeightVector,
    inst: &Instance,
    cfg: &ObjectiveConfig,
    calls: &mut u64,
) -> Result<f64> {
    let pot = graph.condition(w, inst)?;
    let pot_aug = if cfg.loss_enabled {
        loss_augment(&pot, inst, 1.0)
    } else {
        pot
    };
    let y_set = labeled_set(inst);
    *calls += 1;
    match &cfg.backend {
        Backend::Enumerate { cap_log2 } => {
            annealed_value(&pot_aug, &y_set, cfg.temps.eps_y, cfg.temps.eps_h, *cap_log2)
        }
        Backend::Bp(opts) => {
            if cfg.temps.is_max_y() {
                let weights = VariableWeights::mixed(&pot_aug, &y_set, cfg.temps.eps_h);
                Ok(mixed_product(&pot_aug, &weights, opts).log_partition)
            } else {
                let weights =
                    VariableWeights::split(&pot_aug, &y_set, cfg.temps.eps_y, cfg.temps.eps_h);
                Ok(weighted_product(&pot_aug, &weights, opts).log_partition)
            }
        }
    }
}

/// The concave part `U_i⁻`: the annealed log-partition over h with the gold
/// labels clamped.
pub fn instance_lower_term(
    graph: &FactorGraph,
    w: &WeightVector,
    inst: &Instance,
    cfg: &ObjectiveConfig,
    calls: &mut u64,
) -> Result<f64> {
    let pot = graph.condition(w, inst)?;
    *calls += 1;
    match &cfg.backend {
        Backend::Enumerate { cap_log2 } => {
            let clamped = pot.clamp(&inst.y_labels)?;
            annealed_value(&clamped, &BTreeSet::new(), 1.0, cfg.temps.eps_h, *cap_log2)
        }
        Backend::Bp(opts) => {
            Ok(clamped_annealed_bp(&pot, &inst.y_labels, cfg.temps.eps_h, opts)?.log_partition)
        }
    }
}

/// `½‖w‖² + C·Σ_i (U_i⁺ − U_i⁻)`, exactly as the unified objective sums over
/// instances (no averaging).
pub fn unified_objective(
    graph: &FactorGraph,
    w: &WeightVector,
    data: &[Instance],
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    let mut calls = 0u64;
    unified_objective_counted(graph, w, data, cfg, &mut calls)
}

pub fn unified_objective_counted(
    graph: &FactorGraph,
    w: &WeightVector,
    data: &[Instance],
    cfg: &ObjectiveConfig,
    calls: &mut u64,
) -> Result<f64> {
    let reg = 0.5 * w.values.iter().map(|v| v * v).sum::<f64>();
    if cfg.c == 0.0 {
        return Ok(reg);
    }
    let mut total = 0.0;
    for inst in data {
        let up = instance_upper_term(graph, w, inst, cfg, calls)?;
        let lo = instance_lower_term(graph, w, inst, cfg, calls)?;
        total += up - lo;
    }
    Ok(reg + cfg.c * total)
}

/// Expectation of φ under the annealed joint `p^{(ε_y, ε_h)}(y, h | x_i)`
/// (with loss augmentation when enabled); collapses to the loss-augmented
/// decoding in the ε_y→0 limit.
pub(crate) fn joint_expectation(
    graph: &FactorGraph,
    w: &WeightVector,
    inst: &Instance,
    cfg: &ObjectiveConfig,
    calls: &mut u64,
) -> Result<Vec<f64>> {
    let pot = graph.condition(w, inst)?;
    let pot_aug = if cfg.loss_enabled {
        loss_augment(&pot, inst, 1.0)
    } else {
        pot
    };
    let y_set = labeled_set(inst);
    *calls += 1;
    let r = match &cfg.backend {
        Backend::Enumerate { cap_log2 } => enumerate(
            &pot_aug,
            &Query::AnnealedJoint {
                max_nodes: y_set,
                eps_y: cfg.temps.eps_y,
                eps_h: cfg.temps.eps_h,
            },
            *cap_log2,
        )?,
        Backend::Bp(opts) => {
            if cfg.temps.is_max_y() {
                let weights = VariableWeights::mixed(&pot_aug, &y_set, cfg.temps.eps_h);
                mixed_product(&pot_aug, &weights, opts)
            } else {
                let weights =
                    VariableWeights::split(&pot_aug, &y_set, cfg.temps.eps_y, cfg.temps.eps_h);
                weighted_product(&pot_aug, &weights, opts)
            }
        }
    };
    expected_features(graph, inst, &pot_aug, &r.node_beliefs, &r.edge_beliefs)
}

/// Expectation of φ under the gold-clamped conditional `p^{ε_h}(h | x_i, y_i)`.
pub(crate) fn clamped_expectation(
    graph: &FactorGraph,
    w: &WeightVector,
    inst: &Instance,
    cfg: &ObjectiveConfig,
    calls: &mut u64,
) -> Result<Vec<f64>> {
    let pot = graph.condition(w, inst)?;
    *calls += 1;
    let r = match &cfg.backend {
        Backend::Enumerate { cap_log2 } => {
            let sub_pot = pot.clamp(&inst.y_labels)?;
            let sub = enumerate(
                &sub_pot,
                &Query::MarginalMap {
                    max_nodes: BTreeSet::new(),
                    eps_h: cfg.temps.eps_h,
                },
                *cap_log2,
            )?;
            let (nb, eb) = expand_clamped(&pot, &inst.y_labels, &sub_pot, &sub);
            crate::inference::InferenceResult {
                node_beliefs: nb,
                edge_beliefs: eb,
                log_partition: sub.log_partition,
                decoding: None,
                converged: true,
                iterations: 0,
            }
        }
        Backend::Bp(opts) => clamped_annealed_bp(&pot, &inst.y_labels, cfg.temps.eps_h, opts)?,
    };
    expected_features(graph, inst, &pot, &r.node_beliefs, &r.edge_beliefs)
}

/// Data part of the (sub-)gradient: `C·Σ_i (E_joint[φ] − E_clamped[φ])`.
/// Instances are reduced in index order, so results are deterministic.
pub fn data_gradient(
    graph: &FactorGraph,
    w: &WeightVector,
    data: &[Instance],
    cfg: &ObjectiveConfig,
    calls: &mut u64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; graph.template.dim];
    if cfg.c == 0.0 {
        return Ok(grad);
    }
    for inst in data {
        let em = joint_expectation(graph, w, inst, cfg, calls)?;
        let es = clamped_expectation(graph, w, inst, cfg, calls)?;
        for ((g, m), s) in grad.iter_mut().zip(&em).zip(&es) {
            *g += cfg.c * (m - s);
        }
    }
    Ok(grad)
}

/// Full (sub-)gradient `w + C·Σ_i (E_joint[φ] − E_clamped[φ])`.
pub fn unified_gradient(
    graph: &FactorGraph,
    w: &WeightVector,
    data: &[Instance],
    cfg: &ObjectiveConfig,
) -> Result<Vec<f64>> {
    let mut calls = 0u64;
    let mut grad = data_gradient(graph, w, data, cfg, &mut calls)?;
    for (g, v) in grad.iter_mut().zip(&w.values) {
        *g += v;
    }
    Ok(grad)
}

/// Annealed marginal-MAP predictor
/// `ŷ^{ε_h}(w) = argmax_y ε_h log Σ_h exp(w·φ/ε_h)` over the instance's
/// labeled positions; ε_h→0 gives the y-component of the joint MAP.
pub fn predict(
    graph: &FactorGraph,
    w: &WeightVector,
    inst: &Instance,
    eps_h: f64,
    backend: &Backend,
) -> Result<Labels> {
    let pot = graph.condition(w, inst)?;
    let y_set = labeled_set(inst);
    let decoding = match backend {
        Backend::Enumerate { cap_log2 } => {
            enumerate(&pot, &Query::MarginalMap { max_nodes: y_set.clone(), eps_h }, *cap_log2)?
                .decoding
        }
        Backend::Bp(opts) => {
            let weights = VariableWeights::mixed(&pot, &y_set, eps_h);
            mixed_product(&pot, &weights, opts).decoding
        }
    };
    let full = decoding.unwrap_or_default();
    Ok(full.into_iter().filter(|(n, _)| y_set.contains(n)).collect())
}

/// `U_i(w; ε_y, ε_h) − Δ(y_i, ŷ^{ε_h}(w))`: the slack of the upper bound on
/// the empirical loss.  Non-negative (up to round-off) when computed with
/// the enumeration backend.
pub fn lemma1_gap(
    graph: &FactorGraph,
    w: &WeightVector,
    inst: &Instance,
    temps: TemperaturePair,
    cap_log2: u32,
) -> Result<f64> {
    let cfg = ObjectiveConfig {
        c: 1.0,
        temps,
        loss_enabled: true,
        backend: Backend::Enumerate { cap_log2 },
    };
    let mut calls = 0u64;
    let up = instance_upper_term(graph, w, inst, &cfg, &mut calls)?;
    let lo = instance_lower_term(graph, w, inst, &cfg, &mut calls)?;
    let pred = predict(graph, w, inst, temps.eps_h, &cfg.backend)?;
    let nodes: Vec<usize> = inst.y_labels.keys().cloned().collect();
    let delta = hamming_loss(&inst.y_labels, &pred, &nodes)? as f64;
    Ok((up - lo) - delta)
}
