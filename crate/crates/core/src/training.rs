//! Batch (sub-)gradient descent and CCCP trainers.
//!
//! Both trainers follow the loop-over-all-instances-then-update structure:
//! the data gradient `∇ = C·Σ_i (φ_m − φ_s)` is accumulated over the full
//! training set and the weights move by `w ← (1−η)w − η∇`, which is exactly
//! one gradient step on the regularized objective.  CCCP freezes the
//! gold-clamped expectation `u = Σ_i E[φ | y_i]` at the start of each outer
//! iteration and reuses the same stepper on the convexified surrogate until
//! the surrogate gradient norm falls under the inner tolerance.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::model::{hamming_loss, FactorGraph, Instance, WeightVector};
use crate::objectives::{
    clamped_expectation, data_gradient, joint_expectation, predict, unified_objective_counted,
    ObjectiveConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    Sgd,
    Cccp,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub trainer: TrainerKind,
    /// Number of iterations T (outer iterations for CCCP).
    pub iterations: usize,
    /// Constant learning rate η ∈ (0, 1).
    pub learning_rate: f64,
    /// CCCP inner-loop stop on the surrogate gradient norm; `None` uses
    /// `1e-3·√D`.
    pub inner_tolerance: Option<f64>,
    pub max_inner: usize,
    pub seed: u64,
    /// Fixed (index-ordered) reduction; the serial trainers are always
    /// deterministic, callers running trials in parallel key off this.
    pub deterministic: bool,
    /// Optional η/√t decay, off by default.
    pub lr_decay: bool,
    /// Record a full trace row (objective + training error) every this many
    /// iterations; the final iteration is always recorded.  Raising this
    /// skips the per-iteration evaluation pass, which dominates runtime on
    /// large graphs.
    pub trace_every: usize,
}

impl TrainingConfig {
    pub fn sgd(iterations: usize, learning_rate: f64) -> Self {
        TrainingConfig {
            trainer: TrainerKind::Sgd,
            iterations,
            learning_rate,
            inner_tolerance: None,
            max_inner: 500,
            seed: 0,
            deterministic: true,
            lr_decay: false,
            trace_every: 1,
        }
    }

    pub fn cccp(iterations: usize, learning_rate: f64) -> Self {
        TrainingConfig {
            trainer: TrainerKind::Cccp,
            ..TrainingConfig::sgd(iterations, learning_rate)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(Error::Config(format!(
                "learning rate {} outside (0, 1)",
                self.learning_rate
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be ≥ 1".into()));
        }
        if let Some(tol) = self.inner_tolerance {
            if tol <= 0.0 {
                return Err(Error::Config("inner tolerance must be > 0".into()));
            }
        }
        if self.trace_every == 0 {
            return Err(Error::Config("trace interval must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    /// Training Hamming error rate in [0, 1].
    pub train_err: f64,
    pub wall_ms: f64,
    pub inference_calls: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
}

/// Training abort carrying the partial trace for diagnosis.
#[derive(Clone, Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub trace: TrainingTrace,
}

pub type TrainResult = core::result::Result<(WeightVector, TrainingTrace), TrainFailure>;

#[cfg(feature = "std")]
fn now_ms(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

struct Stepper<'a> {
    graph: &'a FactorGraph,
    data: &'a [Instance],
    obj: &'a ObjectiveConfig,
    calls: u64,
}

impl<'a> Stepper<'a> {
    fn train_error(&mut self, w: &WeightVector) -> Result<f64> {
        let mut wrong = 0usize;
        let mut total = 0usize;
        for inst in self.data {
            let pred = predict(self.graph, w, inst, self.obj.temps.eps_h, &self.obj.backend)?;
            self.calls += 1;
            let nodes: Vec<usize> = inst.y_labels.keys().cloned().collect();
            wrong += hamming_loss(&inst.y_labels, &pred, &nodes)?;
            total += nodes.len();
        }
        Ok(if total == 0 { 0.0 } else { wrong as f64 / total as f64 })
    }

    /// Surrogate/true gradient `w + C·Σ_i E_joint[φ] − C·frozen` where
    /// `frozen` is either the live clamped expectation (SGD) or CCCP's `u`.
    fn gradient(
        &mut self,
        w: &WeightVector,
        frozen_u: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let mut grad = match frozen_u {
            None => data_gradient(self.graph, w, self.data, self.obj, &mut self.calls)?,
            Some(u) => {
                let mut grad = vec![0.0; self.graph.template.dim];
                if self.obj.c != 0.0 {
                    for inst in self.data {
                        let em =
                            joint_expectation(self.graph, w, inst, self.obj, &mut self.calls)?;
                        for (g, m) in grad.iter_mut().zip(&em) {
                            *g += self.obj.c * m;
                        }
                    }
                    for (g, s) in grad.iter_mut().zip(u) {
                        *g -= self.obj.c * s;
                    }
                }
                grad
            }
        };
        for (g, v) in grad.iter_mut().zip(&w.values) {
            *g += v;
        }
        Ok(grad)
    }

    fn clamped_sum(&mut self, w: &WeightVector) -> Result<Vec<f64>> {
        let mut u = vec![0.0; self.graph.template.dim];
        for inst in self.data {
            let es = clamped_expectation(self.graph, w, inst, self.obj, &mut self.calls)?;
            for (a, s) in u.iter_mut().zip(&es) {
                *a += s;
            }
        }
        Ok(u)
    }

    fn objective(&mut self, w: &WeightVector) -> Result<f64> {
        let mut calls = self.calls;
        let v = unified_objective_counted(self.graph, w, self.data, self.obj, &mut calls)?;
        self.calls = calls;
        Ok(v)
    }
}

fn norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

fn check_finite(g: &[f64], where_: &str) -> Result<()> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient(format!("at {where_}")));
    }
    Ok(())
}

fn fail(error: Error, trace: TrainingTrace) -> TrainFailure {
    TrainFailure { error, trace }
}

/// Sub-gradient descent: starting from `w = 0`, repeats `iterations` times
/// the full-batch gradient accumulation and the update `w ← (1−η)w − η∇`.
pub fn sgd_train(
    graph: &FactorGraph,
    data: &[Instance],
    cfg: &TrainingConfig,
    obj: &ObjectiveConfig,
) -> TrainResult {
    if let Err(e) = cfg.validate() {
        return Err(fail(e, TrainingTrace::default()));
    }
    #[cfg(feature = "std")]
    let start = std::time::Instant::now();
    let mut w = WeightVector::zeros(graph.template.dim);
    let mut trace = TrainingTrace::default();
    let mut stepper = Stepper { graph, data, obj, calls: 0 };
    for t in 1..=cfg.iterations {
        let g = match stepper.gradient(&w, None) {
            Ok(g) => g,
            Err(e) => return Err(fail(e, trace)),
        };
        if let Err(e) = check_finite(&g, &format!("iteration {t}")) {
            return Err(fail(e, trace));
        }
        let eta = if cfg.lr_decay {
            cfg.learning_rate / sqrt(t as f64)
        } else {
            cfg.learning_rate
        };
        // w ← (1−η)w − η∇_data, i.e. one step along the full gradient g
        for (wv, gv) in w.values.iter_mut().zip(&g) {
            *wv -= eta * gv;
        }
        if t % cfg.trace_every == 0 || t == cfg.iterations {
            let obj_val = match stepper.objective(&w) {
                Ok(v) => v,
                Err(e) => return Err(fail(e, trace)),
            };
            let row = match trace_row(&mut stepper, &w, t, norm(&g), obj_val) {
                Ok(r) => r,
                Err(e) => return Err(fail(e, trace)),
            };
            #[cfg(feature = "std")]
            let row = TraceRow { wall_ms: now_ms(start), ..row };
            trace.rows.push(row);
        }
    }
    Ok((w, trace))
}

/// CCCP: each outer iteration freezes `u = Σ_i E[φ | x_i, y_i]` at the
/// current weights, then runs inner gradient steps on the convex surrogate
/// until its gradient norm drops below the tolerance (default `1e-3·√D`) or
/// `max_inner` steps.
pub fn cccp_train(
    graph: &FactorGraph,
    data: &[Instance],
    cfg: &TrainingConfig,
    obj: &ObjectiveConfig,
) -> TrainResult {
    if let Err(e) = cfg.validate() {
        return Err(fail(e, TrainingTrace::default()));
    }
    #[cfg(feature = "std")]
    let start = std::time::Instant::now();
    let tol = cfg
        .inner_tolerance
        .unwrap_or(1e-3 * sqrt(graph.template.dim as f64));
    let mut w = WeightVector::zeros(graph.template.dim);
    let mut trace = TrainingTrace::default();
    let mut stepper = Stepper { graph, data, obj, calls: 0 };
    let mut prev_obj: Option<f64> = None;
    for t in 1..=cfg.iterations {
        let u = match stepper.clamped_sum(&w) {
            Ok(u) => u,
            Err(e) => return Err(fail(e, trace)),
        };
        // inner solve with monotone acceptance: a fixed step size can
        // overshoot on the convex surrogate (the zero-temperature inner
        // problems are only subdifferentiable), which would break the outer
        // descent guarantee.  One retry at half the step is allowed; an
        // iterate that still raises the true objective is rejected and the
        // previous weights are kept.
        let (w_try, mut last_norm) = match inner_solve(&mut stepper, &w, &u, cfg.learning_rate, tol, cfg, t) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, trace)),
        };
        let try_val = match stepper.objective(&w_try) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, trace)),
        };
        let obj_val = match prev_obj {
            Some(p) if try_val > p + 1e-9 => {
                last_norm = 0.0;
                p
            }
            _ => {
                w = w_try;
                try_val
            }
        };
        prev_obj = Some(obj_val);
        let row = match trace_row(&mut stepper, &w, t, last_norm, obj_val) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, trace)),
        };
        #[cfg(feature = "std")]
        let row = TraceRow { wall_ms: now_ms(start), ..row };
        trace.rows.push(row);
    }
    Ok((w, trace))
}

fn inner_solve(
    stepper: &mut Stepper<'_>,
    w0: &WeightVector,
    u: &[f64],
    lr: f64,
    tol: f64,
    cfg: &TrainingConfig,
    outer: usize,
) -> Result<(WeightVector, f64)> {
    let mut w = w0.clone();
    let mut last_norm = 0.0;
    for inner in 0..cfg.max_inner {
        let g = stepper.gradient(&w, Some(u))?;
        check_finite(&g, &format!("outer {outer} inner {inner}"))?;
        last_norm = norm(&g);
        if last_norm <= tol {
            break;
        }
        // Optional η/√k schedule: the zero-temperature surrogates are
        // nonsmooth, and a constant-step subgradient method stalls in an
        // oscillation band.
        let eta = if cfg.lr_decay {
            lr / sqrt((inner + 1) as f64)
        } else {
            lr
        };
        for (wv, gv) in w.values.iter_mut().zip(&g) {
            *wv -= eta * gv;
        }
    }
    Ok((w, last_norm))
}

fn trace_row(
    stepper: &mut Stepper<'_>,
    w: &WeightVector,
    iter: usize,
    grad_norm: f64,
    objective: f64,
) -> Result<TraceRow> {
    let train_err = stepper.train_error(w)?;
    Ok(TraceRow {
        iter,
        objective,
        grad_norm,
        train_err,
        wall_ms: 0.0,
        inference_calls: stepper.calls,
    })
}
