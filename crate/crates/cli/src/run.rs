//! Experiment plumbing shared by the subcommands: flag parsing into core
//! configs, single-trial training/evaluation, and parallel sweeps.

use anyhow::{anyhow, bail, Result};
use rayon::prelude::*;
use serde::Serialize;

use lvsm::eval::{evaluate, EvalReport};
use lvsm::inference::BpOptions;
use lvsm::objectives::{Backend, FamilyPreset, ObjectiveConfig, TemperaturePair};
use lvsm::simulation::{
    generate, make_image_dataset, GeneratorConfig, GibbsOptions, ImageConfig,
};
use lvsm::training::{cccp_train, sgd_train, TrainerKind, TrainingConfig, TrainingTrace};
use lvsm::{FactorGraph, Instance, WeightVector};

/// Parses `mssvm | lssvm | hcrf | loss_lik | eps:<v>`.
pub fn parse_family(name: &str) -> Result<FamilyPreset> {
    match name {
        "mssvm" => Ok(FamilyPreset::Mssvm),
        "lssvm" => Ok(FamilyPreset::Lssvm),
        "hcrf" => Ok(FamilyPreset::Hcrf),
        "loss_lik" => Ok(FamilyPreset::LossAugmentedLikelihood),
        _ => {
            if let Some(v) = name.strip_prefix("eps:") {
                let eps: f64 = v.parse().map_err(|_| anyhow!("bad epsilon in {name:?}"))?;
                if !(eps > 0.0 && eps < 1.0) {
                    bail!("eps:{eps} outside (0, 1)");
                }
                Ok(FamilyPreset::EpsExtension(eps))
            } else {
                bail!("unknown family {name:?} (expected mssvm|lssvm|hcrf|loss_lik|eps:<v>)")
            }
        }
    }
}

pub fn parse_backend(name: &str, decode_polish: usize) -> Result<Backend> {
    match name {
        "bp" => Ok(Backend::Bp(BpOptions { decode_polish, ..BpOptions::default() })),
        "enumerate" => Ok(Backend::enumerate()),
        _ => bail!("unknown backend {name:?} (expected bp|enumerate)"),
    }
}

/// Resolved objective: the family flag, with `--eps-y/--eps-h` raw
/// overrides taking precedence over the preset temperatures.
pub fn build_objective(
    family: &str,
    eps_y: Option<f64>,
    eps_h: Option<f64>,
    c: f64,
    backend: Backend,
) -> Result<(String, ObjectiveConfig)> {
    let preset = parse_family(family)?;
    let mut cfg = preset.config(c, backend);
    if eps_y.is_some() || eps_h.is_some() {
        let temps = TemperaturePair::new(
            eps_y.unwrap_or(cfg.temps.eps_y),
            eps_h.unwrap_or(cfg.temps.eps_h),
        );
        cfg = ObjectiveConfig { temps, ..cfg };
    }
    Ok((family.to_owned(), cfg))
}

pub fn train_once(
    graph: &FactorGraph,
    data: &[Instance],
    cfg: &TrainingConfig,
    obj: &ObjectiveConfig,
) -> Result<(WeightVector, TrainingTrace)> {
    let run = match cfg.trainer {
        TrainerKind::Sgd => sgd_train(graph, data, cfg, obj),
        TrainerKind::Cccp => cccp_train(graph, data, cfg, obj),
    };
    run.map_err(|f| anyhow!("training aborted after {} iterations: {}", f.trace.rows.len(), f.error))
}

/// One train-and-evaluate pass; the predictor temperature defaults to the
/// objective's own ε_h so each family is scored with its own decoder.
pub fn trial(
    graph: &FactorGraph,
    train: &[Instance],
    test: &[Instance],
    tcfg: &TrainingConfig,
    obj: &ObjectiveConfig,
    eval_eps_h: Option<f64>,
) -> Result<EvalReport> {
    let (w, _) = train_once(graph, train, tcfg, obj)?;
    let eps_h = eval_eps_h.unwrap_or(obj.temps.eps_h);
    // Training may run a cheap one-shot decode for speed, but held-out
    // scoring always gets the refined decoder.
    let eval_backend = match &obj.backend {
        Backend::Bp(opts) if opts.decode_polish < 2 => {
            Backend::Bp(BpOptions { decode_polish: 2, ..opts.clone() })
        }
        other => other.clone(),
    };
    Ok(evaluate(graph, &w, test, eps_h, &eval_backend)?)
}

/// Deterministic per-(axis value, trial) seed stream.
pub fn trial_seed(base: u64, axis_index: usize, t: usize) -> u64 {
    base ^ ((axis_index as u64) << 40).wrapping_add((t as u64).wrapping_mul(0x9e37_79b9))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrialOutcome {
    pub accuracy_pct: f64,
    pub test_loglik: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1.0);
    (mean, var.sqrt())
}

/// Runs `trials` chain-benchmark repetitions of one family in parallel:
/// each trial draws its own generative model and data, trains, and scores
/// against the family's own predictor.
pub fn chain_trials(
    gen: &GeneratorConfig,
    gibbs: &GibbsOptions,
    tcfg: &TrainingConfig,
    obj: &ObjectiveConfig,
    trials: usize,
    axis_index: usize,
) -> Result<Vec<TrialOutcome>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(gen.seed, axis_index, t);
            let cfg = GeneratorConfig { seed, ..*gen };
            let data = generate(&cfg, gibbs)?;
            let report = trial(&data.graph, &data.train, &data.test, tcfg, obj, None)?;
            Ok(TrialOutcome {
                accuracy_pct: report.accuracy_pct,
                test_loglik: report.test_loglik,
            })
        })
        .collect()
}

/// Image-study repetitions, same shape as [`chain_trials`].
pub fn image_trials(
    img: &ImageConfig,
    truth: Option<&[usize]>,
    tcfg: &TrainingConfig,
    obj: &ObjectiveConfig,
    trials: usize,
    axis_index: usize,
) -> Result<Vec<TrialOutcome>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(img.seed, axis_index, t);
            let cfg = ImageConfig { seed, ..*img };
            let data = make_image_dataset(&cfg, truth)?;
            let report = trial(&data.graph, &data.train, &data.test, tcfg, obj, None)?;
            Ok(TrialOutcome {
                accuracy_pct: report.accuracy_pct,
                test_loglik: report.test_loglik,
            })
        })
        .collect()
}
