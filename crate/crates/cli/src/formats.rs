//! File formats: model JSON, JSON-lines datasets, PGM images, CSV traces,
//! and run manifests.
//!
//! Every artifact embeds (or sits next to a manifest embedding) a SHA-256
//! hash of the resolved configuration, so reruns can be checked for
//! reproducibility byte-for-byte.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lvsm::training::{TrainingConfig, TrainingTrace};
use lvsm::{FactorGraph, Instance, ObservedValue, WeightVector};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Offset added to scaled intensities when writing real-valued observations
/// as 16-bit PGM, so negative noise survives the unsigned format.
pub const PGM_OFFSET: f64 = 32768.0;
/// Grey levels per intensity unit in 16-bit observation PGMs.
pub const PGM_SCALE: f64 = 1024.0;

/// Trained model on disk: graph + weights + the objective/trainer settings
/// that produced them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    /// Family name as given on the command line (`mssvm`, `lssvm`, `hcrf`,
    /// `loss_lik`, `eps:<v>`, or `custom` for raw temperature overrides).
    pub family: String,
    pub eps_y: f64,
    pub eps_h: f64,
    pub c: f64,
    pub loss_enabled: bool,
    pub backend: String,
    pub trainer: TrainingConfig,
    pub config_hash: String,
    pub graph: FactorGraph,
    pub weights: WeightVector,
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    let json = serde_json::to_string_pretty(model)?;
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let model: ModelFile = serde_json::from_str(&text)?;
    if model.schema_version != MODEL_SCHEMA_VERSION {
        bail!(
            "model schema version {} unsupported (expected {})",
            model.schema_version,
            MODEL_SCHEMA_VERSION
        );
    }
    if model.weights.dim() != model.graph.template.dim {
        bail!(
            "model weight dimension {} does not match template dimension {}",
            model.weights.dim(),
            model.graph.template.dim
        );
    }
    Ok(model)
}

/// One instance per line, fully self-describing JSON.
pub fn write_dataset(path: &Path, data: &[Instance]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for inst in data {
        serde_json::to_writer(&mut w, inst)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<Instance>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        out.push(inst);
    }
    Ok(out)
}

/// SHA-256 of the canonical JSON encoding of a config value.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    Ok(hex::encode(digest))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub files: Vec<String>,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Training trace CSV.  The first line is a comment carrying the config
/// hash; the second is the schema header (version 1).
pub fn write_trace_csv(path: &Path, hash: &str, trace: &TrainingTrace) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# config_hash={hash} schema=trace_v1")?;
    writeln!(w, "iter,objective,grad_norm,train_err,wall_ms,inference_calls")?;
    for r in &trace.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.iter, r.objective, r.grad_norm, r.train_err, r.wall_ms, r.inference_calls
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One aggregated sweep row per (axis value, family).
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub family: String,
    pub trials: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_test_loglik: f64,
}

pub fn write_sweep_csv(path: &Path, hash: &str, rows: &[SweepRow]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# config_hash={hash} schema=sweep_v1")?;
    writeln!(w, "axis,value,family,trials,mean_accuracy,std_accuracy,mean_test_loglik")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.axis, r.value, r.family, r.trials, r.mean_accuracy, r.std_accuracy,
            r.mean_test_loglik
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// PGM (P2, plain ASCII)
// ---------------------------------------------------------------------------

/// Label image: one grey level per label, maxval = labels − 1.
pub fn write_pgm_labels(
    path: &Path,
    width: usize,
    height: usize,
    labels: usize,
    data: &[usize],
) -> Result<()> {
    if data.len() != width * height {
        bail!("label buffer size {} does not match {width}×{height}", data.len());
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "P2")?;
    writeln!(w, "{width} {height}")?;
    writeln!(w, "{}", labels.saturating_sub(1))?;
    for row in data.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Real-valued observation image as 16-bit PGM: each intensity `v` is
/// stored as `round(v · PGM_SCALE + PGM_OFFSET)`, clamped to [0, 65535].
pub fn write_pgm_obs(path: &Path, width: usize, height: usize, data: &[f64]) -> Result<()> {
    if data.len() != width * height {
        bail!("buffer size {} does not match {width}×{height}", data.len());
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "P2")?;
    writeln!(w, "{width} {height}")?;
    writeln!(w, "65535")?;
    for row in data.chunks(width) {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                let g = (v * PGM_SCALE + PGM_OFFSET).round();
                (g.clamp(0.0, 65535.0) as u32).to_string()
            })
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a plain P2 PGM into (width, height, maxval, pixels).
pub fn read_pgm(path: &Path) -> Result<(usize, usize, u32, Vec<u32>)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
        .map(str::to_owned)
        .collect::<Vec<_>>()
        .into_iter();
    match tokens.next().as_deref() {
        Some("P2") => {}
        other => bail!("expected P2 magic, found {other:?}"),
    }
    let mut next_num = |what: &str| -> Result<u32> {
        tokens
            .next()
            .with_context(|| format!("missing {what}"))?
            .parse::<u32>()
            .with_context(|| format!("bad {what}"))
    };
    let width = next_num("width")? as usize;
    let height = next_num("height")? as usize;
    let maxval = next_num("maxval")?;
    let mut pixels = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        pixels.push(next_num("pixel")?);
    }
    Ok((width, height, maxval, pixels))
}

/// Reads a label truth image, checking dimensions and range.
pub fn read_truth_pgm(
    path: &Path,
    width: usize,
    height: usize,
    labels: usize,
) -> Result<Vec<usize>> {
    let (w, h, maxval, pixels) = read_pgm(path)?;
    if (w, h) != (width, height) {
        bail!("truth image is {w}×{h}, expected {width}×{height}");
    }
    if maxval as usize >= labels && maxval as usize != labels - 1 {
        bail!("truth maxval {maxval} incompatible with {labels} labels");
    }
    if let Some(p) = pixels.iter().find(|&&p| p as usize >= labels) {
        bail!("truth pixel value {p} out of range for {labels} labels");
    }
    Ok(pixels.into_iter().map(|p| p as usize).collect())
}

/// Extracts the noisy intensity channel of an image instance (the first
/// component of each observed feature vector, in x-node id order).
pub fn obs_channel(inst: &Instance) -> Vec<f64> {
    inst.x_values
        .values()
        .map(|v| match v {
            ObservedValue::Vector(x) => x.first().copied().unwrap_or(0.0),
            ObservedValue::Label(l) => *l as f64,
        })
        .collect()
}
