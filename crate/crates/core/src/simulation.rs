//! Synthetic data: hidden-chain and two-layer grid MRFs with exact tree /
//! Gibbs joint sampling, and the noisy-image weak-label generator.
//!
//! Hidden-chain wiring (P positions): nodes `h_p = p`, `y_p = P + p`,
//! `x_p = 2P + p`; edges `h_p–h_{p+1}` (backbone), `y_p–h_p`, `x_p–y_p`,
//! `x_p–h_p`.  "40 nodes" counts the y and h layers (P = 20), matching the
//! grid convention where R×C×2 counts both layers.
//!
//! Grid wiring (R×C): `y_rc = r·C + c`, `h_rc = RC + r·C + c`,
//! `x_rc = 2RC + r·C + c`; both y and h layers are 4-connected, with
//! vertical `y_rc–h_rc` edges and `x_rc` attached to both layers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{logsumexp, normalize_log, sqrt};
use crate::model::{
    FactorGraph, FeatureGroup, FeatureTemplate, Instance, Labels, LogPotentials, Node, NodeId,
    ObservedValue, Role, WeightVector,
};

/// Standard deviations of the generative weight draws, keyed by what the
/// feature touches.  Same-layer pairwise weights (y–y, h–h) share `yh` with
/// the cross-layer y–h edges.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
/// Noise levels for the generative weight draws, one per node/edge kind.
/// Each value is the *variance* of the corresponding normal draw.
pub struct SigmaConfig {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub xy: f64,
    pub xh: f64,
    pub yh: f64,
}

impl SigmaConfig {
    /// The σ_x = σ_y = σ_h = 0.1, σ_xy = σ_xh = σ_yh = 2 setting.
    pub fn standard() -> Self {
        SigmaConfig { x: 0.1, y: 0.1, h: 0.1, xy: 2.0, xh: 2.0, yh: 2.0 }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("x", self.x),
            ("y", self.y),
            ("h", self.h),
            ("xy", self.xy),
            ("xh", self.xh),
            ("yh", self.yh),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("sigma_{name} = {v} must be finite and ≥ 0")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    HiddenChain { positions: usize },
    Grid { rows: usize, cols: usize },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub topology: Topology,
    pub cardinality: usize,
    pub sigma: SigmaConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn hidden_chain(positions: usize, seed: u64) -> Self {
        GeneratorConfig {
            topology: Topology::HiddenChain { positions },
            cardinality: 4,
            sigma: SigmaConfig::standard(),
            n_train: 20,
            n_test: 100,
            seed,
        }
    }

    pub fn grid(rows: usize, cols: usize, seed: u64) -> Self {
        GeneratorConfig {
            topology: Topology::Grid { rows, cols },
            ..GeneratorConfig::hidden_chain(1, seed)
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GibbsOptions {
    /// Full sweeps discarded before the first kept sample.
    pub burn_in: usize,
    /// Full sweeps between kept samples.
    pub thin: usize,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        GibbsOptions { burn_in: 1000, thin: 10 }
    }
}

/// Untied template: one unary group per node and one pairwise group per
/// edge, so every node and edge carries its own generative weights.
fn untied_template(nodes: &[Node], edges: &[(NodeId, NodeId)]) -> FeatureTemplate {
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

pub fn hidden_chain_graph(positions: usize, cardinality: usize) -> Result<FactorGraph> {
    if positions == 0 {
        return Err(Error::Config("hidden chain needs ≥ 1 position".into()));
    }
    let p = positions;
    let mut nodes = Vec::with_capacity(3 * p);
    nodes.extend((0..p).map(|_| Node { role: Role::Hidden, cardinality }));
    nodes.extend((0..p).map(|_| Node { role: Role::Output, cardinality }));
    nodes.extend((0..p).map(|_| Node { role: Role::Observed, cardinality }));
    let mut edges = Vec::new();
    // Backbone alternates output and hidden nodes (y_0 h_0 y_1 h_1 ...), so
    // every backbone edge is an output–hidden coupling; each position's input
    // attaches to both its output and its hidden node.
    for i in 0..p {
        edges.push((i, p + i)); // h_i – y_i
        if i + 1 < p {
            edges.push((i, p + i + 1)); // h_i – y_{i+1}
        }
        edges.push((p + i, 2 * p + i)); // y–x
        edges.push((i, 2 * p + i)); // h–x
    }
    let template = untied_template(&nodes, &edges);
    let graph = FactorGraph { nodes, edges, template };
    graph.validate()?;
    Ok(graph)
}

pub fn grid_graph(rows: usize, cols: usize, cardinality: usize) -> Result<FactorGraph> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config("grid needs positive dimensions".into()));
    }
    let rc = rows * cols;
    let mut nodes = Vec::with_capacity(3 * rc);
    nodes.extend((0..rc).map(|_| Node { role: Role::Output, cardinality }));
    nodes.extend((0..rc).map(|_| Node { role: Role::Hidden, cardinality }));
    nodes.extend((0..rc).map(|_| Node { role: Role::Observed, cardinality }));
    let mut edges = Vec::new();
    for layer in [0, rc] {
        for r in 0..rows {
            for c in 0..cols {
                let i = layer + r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
    }
    for i in 0..rc {
        edges.push((i, rc + i)); // y–h
        edges.push((i, 2 * rc + i)); // y–x
        edges.push((rc + i, 2 * rc + i)); // h–x
    }
    let template = untied_template(&nodes, &edges);
    let graph = FactorGraph { nodes, edges, template };
    graph.validate()?;
    Ok(graph)
}

pub fn simulation_graph(cfg: &GeneratorConfig) -> Result<FactorGraph> {
    match cfg.topology {
        Topology::HiddenChain { positions } => hidden_chain_graph(positions, cfg.cardinality),
        Topology::Grid { rows, cols } => grid_graph(rows, cols, cfg.cardinality),
    }
}

fn unary_sigma(role: Role, sigma: &SigmaConfig) -> f64 {
    match role {
        Role::Observed => sigma.x,
        Role::Output => sigma.y,
        Role::Hidden => sigma.h,
    }
}

fn pairwise_sigma(a: Role, b: Role, sigma: &SigmaConfig) -> f64 {
    use Role::*;
    match (a, b) {
        (Observed, Output) | (Output, Observed) => sigma.xy,
        (Observed, Hidden) | (Hidden, Observed) => sigma.xh,
        _ => sigma.yh,
    }
}

/// Draws `w ~ N(0, σ)` entry-wise over the untied template, with the
/// variance σ chosen by the roles each group touches.
pub fn draw_generative_weights(
    graph: &FactorGraph,
    sigma: &SigmaConfig,
    rng: &mut impl Rng,
) -> Result<WeightVector> {
    sigma.validate()?;
    let mut w = WeightVector::zeros(graph.template.dim);
    for g in &graph.template.groups {
        let (offset, len, sd) = match g {
            FeatureGroup::Unary { members, offset } => {
                let role = graph.nodes[members[0]].role;
                (*offset, g.len(&graph.nodes), unary_sigma(role, sigma))
            }
            FeatureGroup::Pairwise { members, offset } => {
                let (a, b) = members[0];
                let sd = pairwise_sigma(graph.nodes[a].role, graph.nodes[b].role, sigma);
                (*offset, g.len(&graph.nodes), sd)
            }
            FeatureGroup::UnaryObs { .. } => {
                return Err(Error::Config(
                    "generative weights are only defined for discrete templates".into(),
                ))
            }
        };
        if sd == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, sqrt(sd))
            .map_err(|e| Error::Config(format!("normal draw: {e:?}")))?;
        for k in offset..offset + len {
            w.values[k] = normal.sample(rng);
        }
    }
    Ok(w)
}

/// Log potentials of the full joint `p(x, y, h) ∝ exp(w·φ)` with every node
/// free (observed nodes included).  Only discrete templates qualify.
pub fn joint_potentials(graph: &FactorGraph, w: &WeightVector) -> Result<LogPotentials> {
    if w.dim() != graph.template.dim {
        return Err(Error::DimensionMismatch { expected: graph.template.dim, got: w.dim() });
    }
    let n = graph.nodes.len();
    let cards: Vec<usize> = graph.nodes.iter().map(|nd| nd.cardinality).collect();
    let mut unary: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    let edges: Vec<(usize, usize)> =
        graph.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let mut index = alloc::collections::BTreeMap::new();
    for (e, &key) in edges.iter().enumerate() {
        index.insert(key, e);
    }
    let mut pairwise: Vec<Vec<f64>> =
        edges.iter().map(|&(u, v)| vec![0.0; cards[u] * cards[v]]).collect();
    for g in &graph.template.groups {
        match g {
            FeatureGroup::Unary { members, offset } => {
                for &m in members {
                    for s in 0..cards[m] {
                        unary[m][s] += w.values[offset + s];
                    }
                }
            }
            FeatureGroup::Pairwise { members, offset } => {
                for &(a, b) in members {
                    let e = index[&(a.min(b), a.max(b))];
                    let (_, v) = edges[e];
                    let cb = cards[b];
                    for sa in 0..cards[a] {
                        for sb in 0..cards[b] {
                            let (su, sv) = if a <= b { (sa, sb) } else { (sb, sa) };
                            pairwise[e][su * cards[v] + sv] += w.values[offset + sa * cb + sb];
                        }
                    }
                }
            }
            FeatureGroup::UnaryObs { .. } => {
                return Err(Error::Config(
                    "joint sampling is only defined for discrete templates".into(),
                ))
            }
        }
    }
    Ok(LogPotentials {
        node_ids: (0..n).collect(),
        cards,
        unary,
        edges,
        pairwise,
        constant: 0.0,
    })
}

fn draw_categorical(log_scores: &[f64], rng: &mut impl Rng) -> usize {
    let mut probs = log_scores.to_vec();
    normalize_log(&mut probs);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (s, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return s;
        }
    }
    probs.len() - 1
}

struct Adjacency {
    // per node: (edge index, neighbor, node is first slot of the edge)
    nbrs: Vec<Vec<(usize, usize, bool)>>,
}

impl Adjacency {
    fn build(pot: &LogPotentials) -> Self {
        let mut nbrs = vec![Vec::new(); pot.num_nodes()];
        for (e, &(u, v)) in pot.edges.iter().enumerate() {
            nbrs[u].push((e, v, true));
            nbrs[v].push((e, u, false));
        }
        Adjacency { nbrs }
    }

    fn edge_score(&self, pot: &LogPotentials, e: usize, first: bool, s: usize, s_nbr: usize) -> f64 {
        let (u, v) = pot.edges[e];
        if first {
            pot.pairwise[e][s * pot.cards[v] + s_nbr]
        } else {
            pot.pairwise[e][s_nbr * pot.cards[u] + s]
        }
    }
}

/// Exact joint draw on a forest: upward sum-product messages, then a
/// root-to-leaf pass sampling each node given its parent.
fn sample_tree(pot: &LogPotentials, adj: &Adjacency, rng: &mut impl Rng) -> Vec<usize> {
    let n = pot.num_nodes();
    let mut parent: Vec<Option<(usize, usize, bool)>> = vec![None; n]; // (parent, edge, child-is-first)
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            order.push(u);
            for &(e, v, first) in &adj.nbrs[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some((u, e, !first));
                    stack.push(v);
                }
            }
        }
    }
    // upward messages: msg_up[u][s_parent]
    let mut msg_up: Vec<Vec<f64>> = vec![Vec::new(); n];
    for &u in order.iter().rev() {
        let mut local = pot.unary[u].clone();
        for &(_, v, _) in &adj.nbrs[u] {
            if parent[v].map(|(p, _, _)| p) == Some(u) {
                for (l, m) in local.iter_mut().zip(&msg_up[v]) {
                    *l += m;
                }
            }
        }
        if let Some((p, e, child_first)) = parent[u] {
            let cp = pot.cards[p];
            let mut msg = vec![0.0; cp];
            let mut scratch = vec![0.0; pot.cards[u]];
            for sp in 0..cp {
                for su in 0..pot.cards[u] {
                    scratch[su] = local[su] + adj.edge_score(pot, e, child_first, su, sp);
                }
                msg[sp] = logsumexp(&scratch);
            }
            msg_up[u] = msg;
        } else {
            msg_up[u] = local; // root keeps its collected scores
        }
    }
    // downward sampling
    let mut sample = vec![0usize; n];
    for &u in &order {
        match parent[u] {
            None => sample[u] = draw_categorical(&msg_up[u], rng),
            Some((p, e, child_first)) => {
                let sp = sample[p];
                let mut local = pot.unary[u].clone();
                for &(_, v, _) in &adj.nbrs[u] {
                    if parent[v].map(|(q, _, _)| q) == Some(u) {
                        for (l, m) in local.iter_mut().zip(&msg_up[v]) {
                            *l += m;
                        }
                    }
                }
                for (su, l) in local.iter_mut().enumerate() {
                    *l += adj.edge_score(pot, e, child_first, su, sp);
                }
                sample[u] = draw_categorical(&local, rng);
            }
        }
    }
    sample
}

fn gibbs_sweep(
    pot: &LogPotentials,
    adj: &Adjacency,
    state: &mut [usize],
    rng: &mut impl Rng,
) {
    let n = pot.num_nodes();
    for _ in 0..n {
        let u = rng.gen_range(0..n);
        let mut scores = pot.unary[u].clone();
        for &(e, v, first) in &adj.nbrs[u] {
            for (s, sc) in scores.iter_mut().enumerate() {
                *sc += adj.edge_score(pot, e, first, s, state[v]);
            }
        }
        state[u] = draw_categorical(&scores, rng);
    }
}

fn assignment_to_instance(graph: &FactorGraph, assignment: &[usize]) -> Instance {
    let mut inst = Instance {
        x_values: Default::default(),
        y_labels: Labels::new(),
        hidden_mask: Default::default(),
    };
    for (i, node) in graph.nodes.iter().enumerate() {
        match node.role {
            Role::Observed => {
                inst.x_values.insert(i, ObservedValue::Label(assignment[i]));
            }
            Role::Output => {
                inst.y_labels.insert(i, assignment[i]);
            }
            Role::Hidden => {
                inst.hidden_mask.insert(i);
            }
        }
    }
    inst
}

/// Draws `n` instances jointly from `p(x, y, h) ∝ exp(w·φ)`.  Forests use
/// the exact two-pass sampler; loopy graphs use one Gibbs chain with the
/// configured burn-in and thinning.
pub fn sample_instances(
    graph: &FactorGraph,
    w: &WeightVector,
    n: usize,
    gibbs: &GibbsOptions,
    rng: &mut impl Rng,
) -> Result<Vec<Instance>> {
    let pot = joint_potentials(graph, w)?;
    let adj = Adjacency::build(&pot);
    let mut out = Vec::with_capacity(n);
    if pot.is_forest() {
        for _ in 0..n {
            let a = sample_tree(&pot, &adj, rng);
            out.push(assignment_to_instance(graph, &a));
        }
        return Ok(out);
    }
    if gibbs.burn_in == 0 {
        return Err(Error::Config("Gibbs sampling needs a nonzero burn-in".into()));
    }
    let mut state: Vec<usize> =
        pot.cards.iter().map(|&c| rng.gen_range(0..c)).collect();
    for _ in 0..gibbs.burn_in {
        gibbs_sweep(&pot, &adj, &mut state, rng);
    }
    for k in 0..n {
        if k > 0 {
            for _ in 0..gibbs.thin.max(1) {
                gibbs_sweep(&pot, &adj, &mut state, rng);
            }
        }
        out.push(assignment_to_instance(graph, &state));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulatedData {
    pub graph: FactorGraph,
    pub weights: WeightVector,
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
}

/// Full simulation pipeline: build the graph, draw generative weights, and
/// sample disjoint train/test streams, all reproducible from `cfg.seed`.
pub fn generate(cfg: &GeneratorConfig, gibbs: &GibbsOptions) -> Result<SimulatedData> {
    use rand::SeedableRng;
    let graph = simulation_graph(cfg)?;
    let mut wrng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = draw_generative_weights(&graph, &cfg.sigma, &mut wrng)?;
    let mut train_rng =
        rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut test_rng =
        rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x3c6e_f372_fe94_f82a);
    let train = sample_instances(&graph, &weights, cfg.n_train, gibbs, &mut train_rng)?;
    let test = sample_instances(&graph, &weights, cfg.n_test, gibbs, &mut test_rng)?;
    Ok(SimulatedData { graph, weights, train, test })
}

// ---------------------------------------------------------------------------
// Noisy-image weak-label study
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ImageConfig {
    pub height: usize,
    pub width: usize,
    pub labels: usize,
    /// Per-pixel Gaussian noise standard deviation; the default reads the
    /// documented N(0, 5) as a variance, σ = √5.
    pub noise_sigma: f64,
    /// Fraction of pixels whose labels are hidden, in [0, 1).
    pub missing_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig {
            height: 20,
            width: 40,
            labels: 5,
            noise_sigma: sqrt(5.0),
            missing_fraction: 0.5,
            n_train: 10,
            n_test: 10,
            seed: 0,
        }
    }
}

impl ImageConfig {
    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if self.labels < 2 {
            return Err(Error::Config("need ≥ 2 labels".into()));
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return Err(Error::Config(format!(
                "missing fraction {} outside [0, 1)",
                self.missing_fraction
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise sigma must be finite and ≥ 0".into()));
        }
        Ok(())
    }
}

/// Segmentation graph: a 4-connected H×W label grid (`y_i = i`) with one
/// observed feature node per pixel (`x_i = HW + i`) carrying the 2-vector
/// `[noisy intensity, 1]`.  Weights are fully tied: one `labels × 2`
/// label-observation block and one `labels × labels` smoothing block.
pub fn image_graph(cfg: &ImageConfig) -> Result<FactorGraph> {
    cfg.validate()?;
    let (hh, ww, labels) = (cfg.height, cfg.width, cfg.labels);
    let hw = hh * ww;
    let mut nodes = Vec::with_capacity(2 * hw);
    nodes.extend((0..hw).map(|_| Node { role: Role::Output, cardinality: labels }));
    nodes.extend((0..hw).map(|_| Node { role: Role::Observed, cardinality: 2 }));
    let mut edges = Vec::new();
    let mut smooth = Vec::new();
    for r in 0..hh {
        for c in 0..ww {
            let i = r * ww + c;
            if c + 1 < ww {
                edges.push((i, i + 1));
                smooth.push((i, i + 1));
            }
            if r + 1 < hh {
                edges.push((i, i + ww));
                smooth.push((i, i + ww));
            }
        }
    }
    let obs_members: Vec<(NodeId, NodeId)> = (0..hw).map(|i| (i, hw + i)).collect();
    let template = FeatureTemplate {
        groups: vec![
            FeatureGroup::UnaryObs { members: obs_members, obs_dim: 2, offset: 0 },
            FeatureGroup::Pairwise { members: smooth, offset: labels * 2 },
        ],
        dim: labels * 2 + labels * labels,
    };
    let graph = FactorGraph { nodes, edges, template };
    graph.validate()?;
    Ok(graph)
}

/// Built-in ground truth: horizontal label bands with a rectangle and a
/// diagonal wedge overlaid, row-major `height × width`.
pub fn default_truth(cfg: &ImageConfig) -> Vec<usize> {
    let (hh, ww, labels) = (cfg.height, cfg.width, cfg.labels);
    let mut img = vec![0usize; hh * ww];
    for r in 0..hh {
        let band = (r * labels) / hh;
        for c in 0..ww {
            img[r * ww + c] = band;
        }
    }
    // rectangle in the upper-right quadrant
    let (r0, r1) = (hh / 8, hh * 2 / 5);
    let (c0, c1) = (ww * 3 / 5, ww * 9 / 10);
    for r in r0..r1 {
        for c in c0..c1 {
            img[r * ww + c] = labels - 1;
        }
    }
    // wedge growing along the bottom-left
    for r in hh / 2..hh {
        let extent = (r - hh / 2 + 1) * ww / hh;
        for c in 0..extent.min(ww) {
            img[r * ww + c] = (img[r * ww + c] + 2) % labels;
        }
    }
    img
}

/// One weakly-labeled instance: per-pixel x = `[truth + noise, 1]`, with
/// `⌈missing_fraction·H·W⌉` uniformly random pixels hidden and the rest
/// labeled with the truth.
pub fn image_instance(
    cfg: &ImageConfig,
    truth: &[usize],
    rng: &mut impl Rng,
) -> Result<Instance> {
    cfg.validate()?;
    let hw = cfg.height * cfg.width;
    if truth.len() != hw {
        return Err(Error::DimensionMismatch { expected: hw, got: truth.len() });
    }
    if let Some(&bad) = truth.iter().find(|&&l| l >= cfg.labels) {
        return Err(Error::Config(format!("truth label {bad} out of range")));
    }
    let noise = Normal::new(0.0, cfg.noise_sigma)
        .map_err(|e| Error::Config(format!("normal draw: {e:?}")))?;
    let mut inst = Instance {
        x_values: Default::default(),
        y_labels: Labels::new(),
        hidden_mask: Default::default(),
    };
    for (i, &l) in truth.iter().enumerate() {
        let obs = l as f64 + if cfg.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
        inst.x_values.insert(hw + i, ObservedValue::Vector(vec![obs, 1.0]));
    }
    let n_hidden = ceil_mul(cfg.missing_fraction, hw);
    let mut pixels: Vec<usize> = (0..hw).collect();
    // partial Fisher–Yates: the first n_hidden entries are a uniform subset
    for k in 0..n_hidden {
        let j = rng.gen_range(k..hw);
        pixels.swap(k, j);
    }
    for (k, &p) in pixels.iter().enumerate() {
        if k < n_hidden {
            inst.hidden_mask.insert(p);
        } else {
            inst.y_labels.insert(p, truth[p]);
        }
    }
    Ok(inst)
}

fn ceil_mul(frac: f64, n: usize) -> usize {
    let raw = frac * n as f64;
    let c = raw as usize;
    if (c as f64) < raw {
        c + 1
    } else {
        c
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImageData {
    pub graph: FactorGraph,
    pub truth: Vec<usize>,
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
}

/// Builds the segmentation graph and samples train/test instances over the
/// given (or built-in) ground truth.  Test instances carry full labels so
/// held-out accuracy is measured on every pixel.
pub fn make_image_dataset(cfg: &ImageConfig, truth: Option<&[usize]>) -> Result<ImageData> {
    use rand::SeedableRng;
    let graph = image_graph(cfg)?;
    let truth: Vec<usize> = match truth {
        Some(t) => t.to_vec(),
        None => default_truth(cfg),
    };
    let mut train_rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut test_rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x3c6e_f372_fe94_f82a);
    let mut train = Vec::with_capacity(cfg.n_train);
    for _ in 0..cfg.n_train {
        train.push(image_instance(cfg, &truth, &mut train_rng)?);
    }
    let full = ImageConfig { missing_fraction: 0.0, ..*cfg };
    let mut test = Vec::with_capacity(cfg.n_test);
    for _ in 0..cfg.n_test {
        test.push(image_instance(&full, &truth, &mut test_rng)?);
    }
    Ok(ImageData { graph, truth, train, test })
}
