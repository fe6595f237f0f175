//! `lvsm` command-line harness: synthetic data generation, training,
//! evaluation, and hyperparameter sweeps over the temperature family.

use lvsm_cli::{formats, run};

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lvsm::eval::evaluate;
use lvsm::simulation::{
    generate, make_image_dataset, GeneratorConfig, GibbsOptions, ImageConfig, SigmaConfig,
    Topology,
};
use lvsm::training::{TrainerKind, TrainingConfig};

use formats::{
    config_hash, load_model, read_dataset, read_truth_pgm, save_model, write_dataset,
    write_manifest, write_pgm_labels, write_pgm_obs, write_sweep_csv, write_trace_csv, Manifest,
    ModelFile, SweepRow, MODEL_SCHEMA_VERSION,
};

#[derive(Parser)]
#[command(name = "lvsm", version, about = "Structured prediction with hidden variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (hidden chain, two-layer grid, or noisy
    /// weak-label image).
    Simulate(SimulateArgs),
    /// Train a family preset on a simulated dataset directory.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset directory.
    Eval(EvalArgs),
    /// Sweep one experiment axis, training every family per axis value.
    Sweep(SweepArgs),
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// chain | grid | image
    #[arg(long, default_value = "chain")]
    topology: String,
    /// Chain positions P (the chain has 2P non-observed nodes).
    #[arg(long, default_value_t = 20)]
    positions: usize,
    #[arg(long, default_value_t = 6)]
    rows: usize,
    #[arg(long, default_value_t = 6)]
    cols: usize,
    #[arg(long, default_value_t = 4)]
    cardinality: usize,
    #[arg(long, default_value_t = 20)]
    n_train: usize,
    #[arg(long, default_value_t = 100)]
    n_test: usize,
    /// Generative stds; defaults follow the standard benchmark setting.
    #[arg(long, default_value_t = 0.1)]
    sigma_x: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma_y: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma_h: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma_xy: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma_xh: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma_yh: f64,
    /// Image height (image topology only).
    #[arg(long, default_value_t = 20)]
    height: usize,
    #[arg(long, default_value_t = 40)]
    width: usize,
    #[arg(long, default_value_t = 5)]
    labels: usize,
    /// Per-pixel noise std; the default reads N(0, 5) as a variance.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Fraction of training pixels with hidden labels.
    #[arg(long, default_value_t = 0.5)]
    missing: f64,
    /// Optional P2 PGM ground-truth label image (maxval = labels − 1).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Serialize)]
struct TrainFlags {
    /// mssvm | lssvm | hcrf | loss_lik | eps:<v>
    #[arg(long, default_value = "mssvm")]
    family: String,
    /// Raw temperature overrides on top of the family preset.
    #[arg(long)]
    eps_y: Option<f64>,
    #[arg(long)]
    eps_h: Option<f64>,
    /// sgd | cccp
    #[arg(long, default_value = "sgd")]
    trainer: String,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Regularization weight.
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    /// bp | enumerate
    #[arg(long, default_value = "bp")]
    backend: String,
    /// Decode-refinement sweeps for marginal MAP prediction; set 0 on
    /// large grids.
    #[arg(long, default_value_t = 2)]
    decode_polish: usize,
    /// η/√t learning-rate decay.
    #[arg(long, default_value_t = false)]
    lr_decay: bool,
    /// Inner-loop step cap per outer iteration (cccp only).
    #[arg(long, default_value_t = 500)]
    max_inner: usize,
    /// Record a full trace row every this many iterations.
    #[arg(long, default_value_t = 1)]
    trace_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainFlags {
    fn training_config(&self) -> Result<TrainingConfig> {
        let trainer = match self.trainer.as_str() {
            "sgd" => TrainerKind::Sgd,
            "cccp" => TrainerKind::Cccp,
            other => bail!("unknown trainer {other:?} (expected sgd|cccp)"),
        };
        let base = TrainingConfig::sgd(self.iters, self.lr);
        Ok(TrainingConfig {
            trainer,
            seed: self.seed,
            lr_decay: self.lr_decay,
            max_inner: self.max_inner,
            trace_every: self.trace_every,
            ..base
        })
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Dataset directory produced by `simulate`.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory; evaluation uses its `test.jsonl`.
    #[arg(long)]
    data: PathBuf,
    /// Predictor temperature; defaults to the model's training ε_h.
    #[arg(long)]
    eps_h: Option<f64>,
    /// Optional output directory for `eval.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    /// sigma-h | train-size | missing | family
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values; defaults depend on the axis.
    #[arg(long)]
    values: Option<String>,
    /// Families to run per axis value.
    #[arg(long, default_value = "mssvm,lssvm,hcrf")]
    families: String,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Chain positions for the chain-based axes.
    #[arg(long, default_value_t = 20)]
    positions: usize,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            ExitCode::FAILURE
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let hash = config_hash(args)?;
    let mut files = vec![
        "graph.json".to_owned(),
        "train.jsonl".to_owned(),
        "test.jsonl".to_owned(),
    ];
    match args.topology.as_str() {
        "chain" | "grid" => {
            let sigma = SigmaConfig {
                x: args.sigma_x,
                y: args.sigma_y,
                h: args.sigma_h,
                xy: args.sigma_xy,
                xh: args.sigma_xh,
                yh: args.sigma_yh,
            };
            let topology = if args.topology == "chain" {
                Topology::HiddenChain { positions: args.positions }
            } else {
                Topology::Grid { rows: args.rows, cols: args.cols }
            };
            let cfg = GeneratorConfig {
                topology,
                cardinality: args.cardinality,
                sigma,
                n_train: args.n_train,
                n_test: args.n_test,
                seed: args.seed,
            };
            let data = generate(&cfg, &GibbsOptions::default())?;
            fs::write(args.out.join("graph.json"), serde_json::to_string_pretty(&data.graph)?)?;
            fs::write(
                args.out.join("gen_weights.json"),
                serde_json::to_string_pretty(&data.weights)?,
            )?;
            files.push("gen_weights.json".to_owned());
            write_dataset(&args.out.join("train.jsonl"), &data.train)?;
            write_dataset(&args.out.join("test.jsonl"), &data.test)?;
        }
        "image" => {
            let cfg = ImageConfig {
                height: args.height,
                width: args.width,
                labels: args.labels,
                noise_sigma: args.noise_sigma.unwrap_or(ImageConfig::default().noise_sigma),
                missing_fraction: args.missing,
                n_train: args.n_train,
                n_test: args.n_test,
                seed: args.seed,
            };
            let truth = match &args.truth {
                Some(p) => Some(read_truth_pgm(p, cfg.width, cfg.height, cfg.labels)?),
                None => None,
            };
            let data = make_image_dataset(&cfg, truth.as_deref())?;
            fs::write(args.out.join("graph.json"), serde_json::to_string_pretty(&data.graph)?)?;
            write_dataset(&args.out.join("train.jsonl"), &data.train)?;
            write_dataset(&args.out.join("test.jsonl"), &data.test)?;
            write_pgm_labels(
                &args.out.join("truth.pgm"),
                cfg.width,
                cfg.height,
                cfg.labels,
                &data.truth,
            )?;
            files.push("truth.pgm".to_owned());
            if let Some(first) = data.train.first() {
                let channel = formats::obs_channel(first);
                write_pgm_obs(&args.out.join("sample_x.pgm"), cfg.width, cfg.height, &channel)?;
                files.push("sample_x.pgm".to_owned());
            }
        }
        other => bail!("unknown topology {other:?} (expected chain|grid|image)"),
    }
    write_manifest(
        &args.out,
        &Manifest {
            schema_version: MODEL_SCHEMA_VERSION,
            command: "simulate".to_owned(),
            seed: args.seed,
            config_hash: hash,
            files,
        },
    )?;
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let graph_json = fs::read_to_string(args.data.join("graph.json"))
        .with_context(|| format!("reading {}/graph.json", args.data.display()))?;
    let graph: lvsm::FactorGraph = serde_json::from_str(&graph_json)?;
    graph.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let train = read_dataset(&args.data.join("train.jsonl"))?;
    let backend = run::parse_backend(&args.flags.backend, args.flags.decode_polish)?;
    let (family, obj) = run::build_objective(
        &args.flags.family,
        args.flags.eps_y,
        args.flags.eps_h,
        args.flags.c,
        backend,
    )?;
    let tcfg = args.flags.training_config()?;
    let hash = config_hash(&(&args.flags, &args.data))?;
    let (weights, trace) = run::train_once(&graph, &train, &tcfg, &obj)?;
    let model = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        family,
        eps_y: obj.temps.eps_y,
        eps_h: obj.temps.eps_h,
        c: obj.c,
        loss_enabled: obj.loss_enabled,
        backend: args.flags.backend.clone(),
        trainer: tcfg,
        config_hash: hash.clone(),
        graph,
        weights,
    };
    save_model(&args.out.join("model.json"), &model)?;
    write_trace_csv(&args.out.join("trace.csv"), &hash, &trace)?;
    write_manifest(
        &args.out,
        &Manifest {
            schema_version: MODEL_SCHEMA_VERSION,
            command: "train".to_owned(),
            seed: args.flags.seed,
            config_hash: hash,
            files: vec!["model.json".to_owned(), "trace.csv".to_owned()],
        },
    )?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let test = read_dataset(&args.data.join("test.jsonl"))?;
    let backend = run::parse_backend(&model.backend, 2)?;
    let eps_h = args.eps_h.unwrap_or(model.eps_h);
    let report = evaluate(&model.graph, &model.weights, &test, eps_h, &backend)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(out) = &args.out {
        ensure_dir(out)?;
        fs::write(out.join("eval.json"), json)?;
    }
    Ok(())
}

fn parse_values(axis: &str, values: &Option<String>) -> Result<Vec<String>> {
    let defaults: &[&str] = match axis {
        "sigma-h" => &["10", "1", "0.5", "0.1", "0.01", "0.001"],
        "train-size" => &["4", "8", "16", "32", "64", "128", "256", "512", "1024"],
        "missing" => &["0.1", "0.3", "0.5", "0.8", "0.95"],
        "family" => &["mssvm", "lssvm", "hcrf"],
        other => bail!("unknown axis {other:?} (expected sigma-h|train-size|missing|family)"),
    };
    Ok(match values {
        Some(v) => v.split(',').map(|s| s.trim().to_owned()).collect(),
        None => defaults.iter().map(|s| (*s).to_owned()).collect(),
    })
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let values = parse_values(&args.axis, &args.values)?;
    if values.is_empty() {
        bail!("axis value list is empty");
    }
    let families: Vec<String> =
        args.families.split(',').map(|s| s.trim().to_owned()).collect();
    let backend = run::parse_backend(&args.flags.backend, args.flags.decode_polish)?;
    let tcfg = args.flags.training_config()?;
    let hash = config_hash(args)?;
    let mut rows = Vec::new();
    for (vi, value) in values.iter().enumerate() {
        // on the family axis each value *is* the family to run
        let per_value: Vec<String> =
            if args.axis == "family" { vec![value.clone()] } else { families.clone() };
        for family in &per_value {
            let (_, obj) = run::build_objective(
                family,
                args.flags.eps_y,
                args.flags.eps_h,
                args.flags.c,
                backend,
            )?;
            let outcomes = match args.axis.as_str() {
                "sigma-h" => {
                    let sh: f64 = value.parse().with_context(|| format!("bad sigma {value}"))?;
                    let mut gen = GeneratorConfig::hidden_chain(args.positions, args.flags.seed);
                    gen.sigma.h = sh;
                    run::chain_trials(&gen, &GibbsOptions::default(), &tcfg, &obj, args.trials, vi)?
                }
                "train-size" => {
                    let n: usize = value.parse().with_context(|| format!("bad size {value}"))?;
                    let mut gen = GeneratorConfig::hidden_chain(args.positions, args.flags.seed);
                    gen.n_train = n;
                    run::chain_trials(&gen, &GibbsOptions::default(), &tcfg, &obj, args.trials, vi)?
                }
                "missing" => {
                    let m: f64 = value.parse().with_context(|| format!("bad fraction {value}"))?;
                    let img = ImageConfig {
                        missing_fraction: m,
                        seed: args.flags.seed,
                        ..ImageConfig::default()
                    };
                    run::image_trials(&img, None, &tcfg, &obj, args.trials, vi)?
                }
                "family" => {
                    let gen = GeneratorConfig::hidden_chain(args.positions, args.flags.seed);
                    run::chain_trials(&gen, &GibbsOptions::default(), &tcfg, &obj, args.trials, 0)?
                }
                _ => unreachable!("validated by parse_values"),
            };
            let accs: Vec<f64> = outcomes.iter().map(|o| o.accuracy_pct).collect();
            let lls: Vec<f64> = outcomes.iter().map(|o| o.test_loglik).collect();
            let (mean_acc, std_acc) = run::mean_std(&accs);
            let (mean_ll, _) = run::mean_std(&lls);
            rows.push(SweepRow {
                axis: args.axis.clone(),
                value: value.clone(),
                family: family.clone(),
                trials: args.trials,
                mean_accuracy: mean_acc,
                std_accuracy: std_acc,
                mean_test_loglik: mean_ll,
            });
        }
    }
    write_sweep_csv(&args.out.join("sweep.csv"), &hash, &rows)?;
    write_manifest(
        &args.out,
        &Manifest {
            schema_version: MODEL_SCHEMA_VERSION,
            command: "sweep".to_owned(),
            seed: args.flags.seed,
            config_hash: hash,
            files: vec!["sweep.csv".to_owned()],
        },
    )?;
    Ok(())
}
