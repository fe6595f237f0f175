//! Pairwise discrete factor graphs with a log-linear feature
//! parameterization `w·φ(x, y, h)`.
//!
//! A [`FactorGraph`] fixes the node set (observed inputs `x`, outputs `y`,
//! hidden `h`), the edge set, and a [`FeatureTemplate`] that maps weight
//! indices to indicator or observation-outer-product features.  An
//! [`Instance`] supplies observed values, gold labels and the per-instance
//! hidden mask.  [`condition`](FactorGraph::condition) absorbs everything
//! determined by `x` into [`LogPotentials`] over the non-observed nodes, the
//! representation the inference engines work on.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Partial assignment: node id to label.
pub type Labels = BTreeMap<NodeId, usize>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Observed,
    Output,
    Hidden,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub role: Role,
    pub cardinality: usize,
}

/// Value carried by an observed node: a discrete label (simulation) or a
/// real feature vector (segmentation).  The template entry touching the node
/// decides which form it expects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedValue {
    Label(usize),
    Vector(Vec<f64>),
}

/// One weight-tying group of the feature template.
///
/// Every weight index in `[offset, offset + len)` is owned by exactly one
/// group; tied members share the same weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureGroup {
    /// One indicator weight per label, shared by `members`.
    Unary { members: Vec<NodeId>, offset: usize },
    /// Outer product `e_label ⊗ x_obs`: `cardinality × obs_dim` weights.
    /// Each member pairs the scored node with the observed node supplying
    /// the real vector.
    UnaryObs {
        members: Vec<(NodeId, NodeId)>,
        obs_dim: usize,
        offset: usize,
    },
    /// One weight per ordered label pair `(s_a, s_b)` for each member edge
    /// `(a, b)`; layout is `s_a * card_b + s_b`.
    Pairwise {
        members: Vec<(NodeId, NodeId)>,
        offset: usize,
    },
}

impl FeatureGroup {
    pub fn offset(&self) -> usize {
        match self {
            FeatureGroup::Unary { offset, .. }
            | FeatureGroup::UnaryObs { offset, .. }
            | FeatureGroup::Pairwise { offset, .. } => *offset,
        }
    }

    /// Number of weights owned by the group, given node cardinalities.
    pub fn len(&self, nodes: &[Node]) -> usize {
        match self {
            FeatureGroup::Unary { members, .. } => {
                members.first().map_or(0, |&n| nodes[n].cardinality)
            }
            FeatureGroup::UnaryObs { members, obs_dim, .. } => {
                members.first().map_or(0, |&(n, _)| nodes[n].cardinality * obs_dim)
            }
            FeatureGroup::Pairwise { members, .. } => members
                .first()
                .map_or(0, |&(a, b)| nodes[a].cardinality * nodes[b].cardinality),
        }
    }

    pub fn is_empty(&self, nodes: &[Node]) -> bool {
        self.len(nodes) == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTemplate {
    pub groups: Vec<FeatureGroup>,
    /// Total weight dimension D.
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub values: Vec<f64>,
}

impl WeightVector {
    pub fn zeros(dim: usize) -> Self {
        WeightVector { values: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        crate::math::sqrt(self.values.iter().map(|v| v * v).sum())
    }
}

/// One training or test example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Values for all observed nodes.
    pub x_values: BTreeMap<NodeId, ObservedValue>,
    /// Gold labels for the labeled output nodes.
    pub y_labels: Labels,
    /// Non-observed nodes treated as hidden for this instance.
    pub hidden_mask: BTreeSet<NodeId>,
}

impl Instance {
    /// Non-observed nodes that carry a gold label (the `y` block).
    pub fn labeled_nodes(&self) -> Vec<NodeId> {
        self.y_labels.keys().cloned().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorGraph {
    pub nodes: Vec<Node>,
    /// Unordered node pairs, stored with the smaller id first.
    pub edges: Vec<(NodeId, NodeId)>,
    pub template: FeatureTemplate,
}

// FactorGraph equality ignores template float payloads; none exist, so Eq holds.
impl Eq for FeatureTemplate {}

impl FactorGraph {
    /// Checks the structural invariants: dense unique node ids are implied by
    /// the vector representation; edges must join two distinct existing nodes
    /// without duplicates, cardinalities must be ≥ 2, every weight index must
    /// be owned by exactly one group, and tied members must share cardinality
    /// signatures.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.cardinality < 2 {
                return Err(Error::InvalidGraph(format!(
                    "node {i} has cardinality {} < 2",
                    node.cardinality
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
        }
        let edge_set: BTreeSet<(NodeId, NodeId)> = self
            .edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        let mut owned = vec![false; self.template.dim];
        let mut claim = |off: usize, len: usize| -> Result<()> {
            for k in off..off + len {
                if k >= owned.len() {
                    return Err(Error::InvalidGraph(format!("weight index {k} out of range")));
                }
                if owned[k] {
                    return Err(Error::InvalidGraph(format!("weight index {k} owned twice")));
                }
                owned[k] = true;
            }
            Ok(())
        };
        for g in &self.template.groups {
            match g {
                FeatureGroup::Unary { members, offset } => {
                    let card = members.first().map(|&m| self.nodes[m].cardinality);
                    for &m in members {
                        if m >= n {
                            return Err(Error::InvalidGraph(format!("unary member {m} out of range")));
                        }
                        if Some(self.nodes[m].cardinality) != card {
                            return Err(Error::InvalidGraph(String::from(
                                "tied unary group mixes cardinalities",
                            )));
                        }
                    }
                    claim(*offset, g.len(&self.nodes))?;
                }
                FeatureGroup::UnaryObs { members, obs_dim, offset } => {
                    let card = members.first().map(|&(m, _)| self.nodes[m].cardinality);
                    for &(m, o) in members {
                        if m >= n || o >= n {
                            return Err(Error::InvalidGraph(String::from(
                                "unary-obs member out of range",
                            )));
                        }
                        if self.nodes[o].role != Role::Observed {
                            return Err(Error::InvalidGraph(format!(
                                "unary-obs group references non-observed node {o}"
                            )));
                        }
                        if Some(self.nodes[m].cardinality) != card {
                            return Err(Error::InvalidGraph(String::from(
                                "tied unary-obs group mixes cardinalities",
                            )));
                        }
                        if *obs_dim == 0 {
                            return Err(Error::InvalidGraph(String::from("obs_dim must be ≥ 1")));
                        }
                    }
                    claim(*offset, g.len(&self.nodes))?;
                }
                FeatureGroup::Pairwise { members, offset } => {
                    let sig = members
                        .first()
                        .map(|&(a, b)| (self.nodes[a].cardinality, self.nodes[b].cardinality));
                    for &(a, b) in members {
                        if a >= n || b >= n {
                            return Err(Error::InvalidGraph(String::from(
                                "pairwise member out of range",
                            )));
                        }
                        if !edge_set.contains(&(a.min(b), a.max(b))) {
                            return Err(Error::InvalidGraph(format!(
                                "pairwise member ({a}, {b}) is not a graph edge"
                            )));
                        }
                        if Some((self.nodes[a].cardinality, self.nodes[b].cardinality)) != sig {
                            return Err(Error::InvalidGraph(String::from(
                                "tied pairwise group mixes cardinality signatures",
                            )));
                        }
                    }
                    claim(*offset, g.len(&self.nodes))?;
                }
            }
        }
        if let Some(k) = owned.iter().position(|&o| !o) {
            return Err(Error::InvalidGraph(format!("weight index {k} owned by no group")));
        }
        Ok(())
    }

    pub fn non_observed(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].role != Role::Observed)
            .collect()
    }

    fn check_instance(&self, inst: &Instance) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            match node.role {
                Role::Observed => {
                    match inst.x_values.get(&i) {
                        None => {
                            return Err(Error::InvalidAssignment(format!(
                                "observed node {i} has no value"
                            )))
                        }
                        Some(ObservedValue::Label(l)) if *l >= node.cardinality => {
                            return Err(Error::InvalidAssignment(format!(
                                "observed label {l} out of range on node {i}"
                            )))
                        }
                        _ => {}
                    }
                }
                _ => {
                    let labeled = inst.y_labels.contains_key(&i);
                    let hidden = inst.hidden_mask.contains(&i);
                    if labeled && hidden {
                        return Err(Error::InvalidAssignment(format!(
                            "node {i} is both labeled and hidden"
                        )));
                    }
                    if !labeled && !hidden {
                        return Err(Error::InvalidAssignment(format!(
                            "non-observed node {i} is neither labeled nor hidden"
                        )));
                    }
                    if let Some(&l) = inst.y_labels.get(&i) {
                        if l >= node.cardinality {
                            return Err(Error::InvalidAssignment(format!(
                                "label {l} out of range on node {i}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Label of node `n` under the combined assignment (observed value,
    /// provided `y`, or provided `h`).
    fn lookup(
        &self,
        inst: &Instance,
        y: &Labels,
        h: &Labels,
        n: NodeId,
    ) -> Result<Option<ObservedValue>> {
        match self.nodes[n].role {
            Role::Observed => Ok(inst.x_values.get(&n).cloned()),
            _ => {
                let l = if inst.hidden_mask.contains(&n) {
                    h.get(&n)
                } else {
                    y.get(&n)
                };
                match l {
                    Some(&l) if l < self.nodes[n].cardinality => Ok(Some(ObservedValue::Label(l))),
                    Some(&l) => Err(Error::InvalidAssignment(format!(
                        "label {l} out of range on node {n}"
                    ))),
                    None => Err(Error::InvalidAssignment(format!(
                        "assignment missing node {n}"
                    ))),
                }
            }
        }
    }

    /// The feature vector φ(x, y, h), returned sparse as sorted
    /// `(index, value)` pairs with coincident indices merged.
    ///
    /// `y` must cover the labeled output nodes and `h` the hidden mask of
    /// `inst`.
    pub fn feature_vector(
        &self,
        inst: &Instance,
        y: &Labels,
        h: &Labels,
    ) -> Result<Vec<(usize, f64)>> {
        self.check_instance(inst)?;
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        let label_of = |n: NodeId| -> Result<usize> {
            match self.lookup(inst, y, h, n)? {
                Some(ObservedValue::Label(l)) => Ok(l),
                Some(ObservedValue::Vector(_)) => Err(Error::InvalidAssignment(format!(
                    "node {n} carries a vector where a label is required"
                ))),
                None => Err(Error::InvalidAssignment(format!("node {n} has no value"))),
            }
        };
        for g in &self.template.groups {
            match g {
                FeatureGroup::Unary { members, offset } => {
                    for &m in members {
                        let l = label_of(m)?;
                        *acc.entry(offset + l).or_insert(0.0) += 1.0;
                    }
                }
                FeatureGroup::UnaryObs { members, obs_dim, offset } => {
                    for &(m, o) in members {
                        let l = label_of(m)?;
                        let v = match inst.x_values.get(&o) {
                            Some(ObservedValue::Vector(v)) if v.len() == *obs_dim => v,
                            _ => {
                                return Err(Error::InvalidAssignment(format!(
                                    "observed node {o} lacks a {obs_dim}-vector"
                                )))
                            }
                        };
                        for (k, &x) in v.iter().enumerate() {
                            if x != 0.0 {
                                *acc.entry(offset + l * obs_dim + k).or_insert(0.0) += x;
                            }
                        }
                    }
                }
                FeatureGroup::Pairwise { members, offset } => {
                    for &(a, b) in members {
                        let la = label_of(a)?;
                        let lb = label_of(b)?;
                        let cb = self.nodes[b].cardinality;
                        *acc.entry(offset + la * cb + lb).or_insert(0.0) += 1.0;
                    }
                }
            }
        }
        Ok(acc.into_iter().collect())
    }

    /// Conditions on the instance's observed values: everything determined by
    /// `x` is folded into unary tables, pairwise tables and a constant over
    /// the non-observed nodes, so that for every complete `(y, h)`,
    /// `constant + Σ unary + Σ pairwise = w·φ(x, y, h)`.
    pub fn condition(&self, w: &WeightVector, inst: &Instance) -> Result<LogPotentials> {
        if w.dim() != self.template.dim {
            return Err(Error::DimensionMismatch {
                expected: self.template.dim,
                got: w.dim(),
            });
        }
        self.check_instance(inst)?;
        let node_ids = self.non_observed();
        let local: BTreeMap<NodeId, usize> =
            node_ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let cards: Vec<usize> = node_ids.iter().map(|&n| self.nodes[n].cardinality).collect();
        let mut unary: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut edge_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &(a, b) in &self.edges {
            if let (Some(&ia), Some(&ib)) = (local.get(&a), local.get(&b)) {
                let key = (ia.min(ib), ia.max(ib));
                edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
            }
        }
        let mut pairwise: Vec<Vec<f64>> = edges
            .iter()
            .map(|&(u, v)| vec![0.0; cards[u] * cards[v]])
            .collect();
        let mut constant = 0.0;
        let obs_label = |n: NodeId| -> Result<usize> {
            match inst.x_values.get(&n) {
                Some(ObservedValue::Label(l)) => Ok(*l),
                _ => Err(Error::InvalidAssignment(format!(
                    "observed node {n} lacks a discrete label"
                ))),
            }
        };
        for g in &self.template.groups {
            match g {
                FeatureGroup::Unary { members, offset } => {
                    for &m in members {
                        match local.get(&m) {
                            Some(&i) => {
                                for s in 0..cards[i] {
                                    unary[i][s] += w.values[offset + s];
                                }
                            }
                            None => constant += w.values[offset + obs_label(m)?],
                        }
                    }
                }
                FeatureGroup::UnaryObs { members, obs_dim, offset } => {
                    for &(m, o) in members {
                        let v = match inst.x_values.get(&o) {
                            Some(ObservedValue::Vector(v)) if v.len() == *obs_dim => v,
                            _ => {
                                return Err(Error::InvalidAssignment(format!(
                                    "observed node {o} lacks a {obs_dim}-vector"
                                )))
                            }
                        };
                        let i = *local.get(&m).ok_or_else(|| {
                            Error::InvalidAssignment(format!(
                                "unary-obs member {m} must be non-observed"
                            ))
                        })?;
                        for s in 0..cards[i] {
                            let mut dot = 0.0;
                            for (k, &x) in v.iter().enumerate() {
                                dot += w.values[offset + s * obs_dim + k] * x;
                            }
                            unary[i][s] += dot;
                        }
                    }
                }
                FeatureGroup::Pairwise { members, offset } => {
                    for &(a, b) in members {
                        let cb = self.nodes[b].cardinality;
                        match (local.get(&a), local.get(&b)) {
                            (Some(&ia), Some(&ib)) => {
                                let key = (ia.min(ib), ia.max(ib));
                                let e = edge_index[&key];
                                let (cu, cv) = (cards[edges[e].0], cards[edges[e].1]);
                                for sa in 0..cards[ia] {
                                    for sb in 0..cards[ib] {
                                        let wv = w.values[offset + sa * cb + sb];
                                        // table is laid out over (edges[e].0, edges[e].1)
                                        let (su, sv) = if ia <= ib { (sa, sb) } else { (sb, sa) };
                                        debug_assert!(su < cu && sv < cv);
                                        pairwise[e][su * cv + sv] += wv;
                                    }
                                }
                            }
                            (None, Some(&ib)) => {
                                let ra = obs_label(a)?;
                                for sb in 0..cards[ib] {
                                    unary[ib][sb] += w.values[offset + ra * cb + sb];
                                }
                            }
                            (Some(&ia), None) => {
                                let rb = obs_label(b)?;
                                for sa in 0..cards[ia] {
                                    unary[ia][sa] += w.values[offset + sa * cb + rb];
                                }
                            }
                            (None, None) => {
                                constant += w.values[offset + obs_label(a)? * cb + obs_label(b)?];
                            }
                        }
                    }
                }
            }
        }
        Ok(LogPotentials {
            node_ids,
            cards,
            unary,
            edges,
            pairwise,
            constant,
        })
    }
}

/// Hamming loss: count of nodes in `nodes` where the two assignments differ.
pub fn hamming_loss(y_true: &Labels, y_pred: &Labels, nodes: &[NodeId]) -> Result<usize> {
    let mut loss = 0;
    for &n in nodes {
        let a = y_true
            .get(&n)
            .ok_or_else(|| Error::InvalidAssignment(format!("y_true missing node {n}")))?;
        let b = y_pred
            .get(&n)
            .ok_or_else(|| Error::InvalidAssignment(format!("y_pred missing node {n}")))?;
        if a != b {
            loss += 1;
        }
    }
    Ok(loss)
}

/// Expectation of the feature vector `E[φ(x, y, h)]` under a distribution
/// given by node and edge beliefs aligned with `pot` (point masses for
/// clamped or decoded nodes).  Exact whenever the beliefs are: features
/// decompose over nodes and edges, so node marginals and edge joints are
/// sufficient statistics.
pub fn expected_features(
    graph: &FactorGraph,
    inst: &Instance,
    pot: &LogPotentials,
    node_beliefs: &[Vec<f64>],
    edge_beliefs: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; graph.template.dim];
    let local: BTreeMap<NodeId, usize> = pot
        .node_ids
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, i))
        .collect();
    let edge_of: BTreeMap<(usize, usize), usize> = pot
        .edges
        .iter()
        .enumerate()
        .map(|(k, &e)| (e, k))
        .collect();
    let obs_label = |n: NodeId| -> Result<usize> {
        match inst.x_values.get(&n) {
            Some(ObservedValue::Label(l)) => Ok(*l),
            _ => Err(Error::InvalidAssignment(format!(
                "observed node {n} lacks a discrete label"
            ))),
        }
    };
    for g in &graph.template.groups {
        match g {
            FeatureGroup::Unary { members, offset } => {
                for &m in members {
                    match local.get(&m) {
                        Some(&i) => {
                            for (s, &b) in node_beliefs[i].iter().enumerate() {
                                out[offset + s] += b;
                            }
                        }
                        None => out[offset + obs_label(m)?] += 1.0,
                    }
                }
            }
            FeatureGroup::UnaryObs { members, obs_dim, offset } => {
                for &(m, o) in members {
                    let v = match inst.x_values.get(&o) {
                        Some(ObservedValue::Vector(v)) if v.len() == *obs_dim => v,
                        _ => {
                            return Err(Error::InvalidAssignment(format!(
                                "observed node {o} lacks a {obs_dim}-vector"
                            )))
                        }
                    };
                    let i = *local.get(&m).ok_or_else(|| {
                        Error::InvalidAssignment(format!(
                            "unary-obs member {m} must be non-observed"
                        ))
                    })?;
                    for (s, &b) in node_beliefs[i].iter().enumerate() {
                        if b != 0.0 {
                            for (k, &x) in v.iter().enumerate() {
                                out[offset + s * obs_dim + k] += b * x;
                            }
                        }
                    }
                }
            }
            FeatureGroup::Pairwise { members, offset } => {
                for &(a, b) in members {
                    let cb = graph.nodes[b].cardinality;
                    match (local.get(&a), local.get(&b)) {
                        (Some(&ia), Some(&ib)) => {
                            let key = (ia.min(ib), ia.max(ib));
                            let k = *edge_of.get(&key).ok_or_else(|| {
                                Error::InvalidAssignment(format!(
                                    "no edge belief for pair ({a}, {b})"
                                ))
                            })?;
                            let (cu, cv) = (pot.cards[key.0], pot.cards[key.1]);
                            for su in 0..cu {
                                for sv in 0..cv {
                                    let p = edge_beliefs[k][su * cv + sv];
                                    if p != 0.0 {
                                        let (sa, sb) = if ia <= ib { (su, sv) } else { (sv, su) };
                                        out[offset + sa * cb + sb] += p;
                                    }
                                }
                            }
                        }
                        (None, Some(&ib)) => {
                            let ra = obs_label(a)?;
                            for (sb, &p) in node_beliefs[ib].iter().enumerate() {
                                out[offset + ra * cb + sb] += p;
                            }
                        }
                        (Some(&ia), None) => {
                            let rb = obs_label(b)?;
                            for (sa, &p) in node_beliefs[ia].iter().enumerate() {
                                out[offset + sa * cb + rb] += p;
                            }
                        }
                        (None, None) => {
                            out[offset + obs_label(a)? * cb + obs_label(b)?] += 1.0;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Conditioned log-space potentials over the non-observed nodes.
///
/// `node_ids` are ascending graph node ids; all other indices are local.
/// Pairwise tables are row-major over `(edges[e].0, edges[e].1)` with the
/// smaller local index first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogPotentials {
    pub node_ids: Vec<NodeId>,
    pub cards: Vec<usize>,
    pub unary: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
    pub pairwise: Vec<Vec<f64>>,
    pub constant: f64,
}

impl LogPotentials {
    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn local_index(&self, node: NodeId) -> Option<usize> {
        self.node_ids.binary_search(&node).ok()
    }

    /// Energy (log-score) of a complete local assignment, including the
    /// constant.
    pub fn energy(&self, assignment: &[usize]) -> f64 {
        let mut e = self.constant;
        for (i, &s) in assignment.iter().enumerate() {
            e += self.unary[i][s];
        }
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            e += self.pairwise[k][assignment[u] * self.cards[v] + assignment[v]];
        }
        e
    }

    /// Multiplies all tables and the constant by `factor`.
    pub fn scale(&self, factor: f64) -> LogPotentials {
        let mut out = self.clone();
        out.constant *= factor;
        for t in &mut out.unary {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
        for t in &mut out.pairwise {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
        out
    }

    /// Clamps the given nodes (graph ids) to fixed labels, folding their
    /// unary and incident pairwise terms into the remaining tables and the
    /// constant.
    pub fn clamp(&self, fixed: &Labels) -> Result<LogPotentials> {
        let mut keep: Vec<usize> = Vec::new();
        let mut fixed_local: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, &n) in self.node_ids.iter().enumerate() {
            match fixed.get(&n) {
                Some(&l) => {
                    if l >= self.cards[i] {
                        return Err(Error::InvalidAssignment(format!(
                            "clamp label {l} out of range on node {n}"
                        )));
                    }
                    fixed_local.insert(i, l);
                }
                None => keep.push(i),
            }
        }
        let remap: BTreeMap<usize, usize> =
            keep.iter().enumerate().map(|(j, &i)| (i, j)).collect();
        let mut constant = self.constant;
        let mut unary: Vec<Vec<f64>> = keep.iter().map(|&i| self.unary[i].clone()).collect();
        for (&i, &l) in &fixed_local {
            constant += self.unary[i][l];
        }
        let mut edges = Vec::new();
        let mut pairwise = Vec::new();
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            let cv = self.cards[v];
            match (fixed_local.get(&u), fixed_local.get(&v)) {
                (Some(&lu), Some(&lv)) => constant += self.pairwise[k][lu * cv + lv],
                (Some(&lu), None) => {
                    let j = remap[&v];
                    for sv in 0..cv {
                        unary[j][sv] += self.pairwise[k][lu * cv + sv];
                    }
                }
                (None, Some(&lv)) => {
                    let j = remap[&u];
                    for su in 0..self.cards[u] {
                        unary[j][su] += self.pairwise[k][su * cv + lv];
                    }
                }
                (None, None) => {
                    edges.push((remap[&u], remap[&v]));
                    pairwise.push(self.pairwise[k].clone());
                }
            }
        }
        Ok(LogPotentials {
            node_ids: keep.iter().map(|&i| self.node_ids[i]).collect(),
            cards: keep.iter().map(|&i| self.cards[i]).collect(),
            unary,
            edges,
            pairwise,
            constant,
        })
    }

    /// True when the (non-observed) graph is cycle-free; disconnected forests
    /// count as trees.
    pub fn is_forest(&self) -> bool {
        let n = self.num_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(u, v) in &self.edges {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru == rv {
                return false;
            }
            parent[ru] = rv;
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// 4-node toy: x0 observed (card 4), y1, y2 output, h3 hidden; edges
    /// x0–y1, y1–y2, y2–h3.  Untied indicator template.
    fn toy_graph() -> FactorGraph {
        let nodes = vec![
            Node { role: Role::Observed, cardinality: 4 },
            Node { role: Role::Output, cardinality: 3 },
            Node { role: Role::Output, cardinality: 3 },
            Node { role: Role::Hidden, cardinality: 2 },
        ];
        let edges = vec![(0, 1), (1, 2), (2, 3)];
        let mut groups = Vec::new();
        let mut off = 0;
        for n in 0..4 {
            groups.push(FeatureGroup::Unary { members: vec![n], offset: off });
            off += nodes[n].cardinality;
        }
        for &(a, b) in &edges {
            groups.push(FeatureGroup::Pairwise { members: vec![(a, b)], offset: off });
            off += nodes[a].cardinality * nodes[b].cardinality;
        }
        let g = FactorGraph {
            nodes,
            edges,
            template: FeatureTemplate { groups, dim: off },
        };
        g.validate().unwrap();
        g
    }

    fn toy_instance() -> Instance {
        Instance {
            x_values: [(0, ObservedValue::Label(2))].into_iter().collect(),
            y_labels: [(1, 1), (2, 0)].into_iter().collect(),
            hidden_mask: [3].into_iter().collect(),
        }
    }

    fn dot(w: &WeightVector, phi: &[(usize, f64)]) -> f64 {
        phi.iter().map(|&(i, v)| w.values[i] * v).sum()
    }

    #[test]
    fn indicator_features_are_unit() {
        let g = toy_graph();
        let inst = toy_instance();
        let y: Labels = [(1, 1), (2, 0)].into_iter().collect();
        let h: Labels = [(3, 1)].into_iter().collect();
        let phi = g.feature_vector(&inst, &y, &h).unwrap();
        // 4 unary groups + 3 pairwise groups touched, all indicators
        assert_eq!(phi.len(), 7);
        assert!(phi.iter().all(|&(_, v)| v == 1.0));
    }

    #[test]
    fn feature_vector_rejects_bad_assignments() {
        let g = toy_graph();
        let inst = toy_instance();
        let y: Labels = [(1, 1)].into_iter().collect(); // node 2 missing
        let h: Labels = [(3, 0)].into_iter().collect();
        assert!(matches!(
            g.feature_vector(&inst, &y, &h),
            Err(Error::InvalidAssignment(_))
        ));
        let y: Labels = [(1, 1), (2, 7)].into_iter().collect(); // out of range
        assert!(matches!(
            g.feature_vector(&inst, &y, &h),
            Err(Error::InvalidAssignment(_))
        ));
    }

    #[test]
    fn zero_weights_condition_to_zero() {
        let g = toy_graph();
        let pot = g.condition(&WeightVector::zeros(g.template.dim), &toy_instance()).unwrap();
        assert_eq!(pot.constant, 0.0);
        assert!(pot.unary.iter().flatten().all(|&v| v == 0.0));
        assert!(pot.pairwise.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pairwise_indicator_lands_where_expected() {
        // y2 (card 3) – h3 (card 2): weight 1 on label pair (2, 1)
        let g = toy_graph();
        let mut w = WeightVector::zeros(g.template.dim);
        let off = g
            .template
            .groups
            .iter()
            .find_map(|gr| match gr {
                FeatureGroup::Pairwise { members, offset } if members[0] == (2, 3) => Some(*offset),
                _ => None,
            })
            .unwrap();
        w.values[off + 2 * 2 + 1] = 1.0;
        let pot = g.condition(&w, &toy_instance()).unwrap();
        let e = pot
            .edges
            .iter()
            .position(|&(u, v)| (pot.node_ids[u], pot.node_ids[v]) == (2, 3))
            .unwrap();
        let table = &pot.pairwise[e];
        assert_eq!(table.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(table[2 * 2 + 1], 1.0);
    }

    #[test]
    fn condition_matches_feature_dot_product() {
        let g = toy_graph();
        let inst = toy_instance();
        let mut rng = StdRng::seed_from_u64(11);
        let w = WeightVector {
            values: (0..g.template.dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let pot = g.condition(&w, &inst).unwrap();
        for _ in 0..50 {
            let y: Labels = [(1, rng.gen_range(0..3)), (2, rng.gen_range(0..3))]
                .into_iter()
                .collect();
            let h: Labels = [(3, rng.gen_range(0..2))].into_iter().collect();
            let phi = g.feature_vector(&inst, &y, &h).unwrap();
            let mut local = vec![0usize; pot.num_nodes()];
            for (i, &n) in pot.node_ids.iter().enumerate() {
                local[i] = *y.get(&n).or_else(|| h.get(&n)).unwrap();
            }
            assert!((pot.energy(&local) - dot(&w, &phi)).abs() < 1e-10);
        }
    }

    #[test]
    fn condition_rejects_dim_mismatch() {
        let g = toy_graph();
        let w = WeightVector::zeros(g.template.dim + 1);
        assert!(matches!(
            g.condition(&w, &toy_instance()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tied_nodes_with_equal_observations_share_tables() {
        // two pixels tied in one UnaryObs group with identical observations
        let nodes = vec![
            Node { role: Role::Observed, cardinality: 2 },
            Node { role: Role::Observed, cardinality: 2 },
            Node { role: Role::Output, cardinality: 3 },
            Node { role: Role::Output, cardinality: 3 },
        ];
        let g = FactorGraph {
            nodes,
            edges: vec![(2, 3)],
            template: FeatureTemplate {
                groups: vec![
                    FeatureGroup::UnaryObs {
                        members: vec![(2, 0), (3, 1)],
                        obs_dim: 2,
                        offset: 0,
                    },
                    FeatureGroup::Pairwise { members: vec![(2, 3)], offset: 6 },
                ],
                dim: 15,
            },
        };
        g.validate().unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let w = WeightVector {
            values: (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let obs = ObservedValue::Vector(vec![0.4, -1.1]);
        let inst = Instance {
            x_values: [(0, obs.clone()), (1, obs)].into_iter().collect(),
            y_labels: [(2, 0), (3, 0)].into_iter().collect(),
            hidden_mask: BTreeSet::new(),
        };
        let pot = g.condition(&w, &inst).unwrap();
        assert_eq!(pot.unary[0], pot.unary[1]);

        // all-zeros observation kills the unary contribution
        let zero = ObservedValue::Vector(vec![0.0, 0.0]);
        let inst0 = Instance {
            x_values: [(0, zero.clone()), (1, zero)].into_iter().collect(),
            ..inst
        };
        let pot0 = g.condition(&w, &inst0).unwrap();
        assert!(pot0.unary.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn hamming_loss_cases() {
        let nodes = [0, 1, 2, 3];
        let a: Labels = [(0, 0), (1, 1), (2, 2), (3, 3)].into_iter().collect();
        let b: Labels = [(0, 0), (1, 1), (2, 0), (3, 3)].into_iter().collect();
        assert_eq!(hamming_loss(&a, &a, &nodes).unwrap(), 0);
        assert_eq!(hamming_loss(&a, &b, &nodes).unwrap(), 1);
        let c: Labels = [(0, 1), (1, 2), (2, 3), (3, 0)].into_iter().collect();
        assert_eq!(hamming_loss(&a, &c, &nodes).unwrap(), 4);
        let short: Labels = [(0, 0)].into_iter().collect();
        assert!(hamming_loss(&a, &short, &nodes).is_err());
    }

    #[test]
    fn hamming_loss_is_a_metric() {
        let mut rng = StdRng::seed_from_u64(5);
        let nodes: Vec<usize> = (0..6).collect();
        let draw = |rng: &mut StdRng| -> Labels {
            (0..6).map(|n| (n, rng.gen_range(0..4))).collect()
        };
        for _ in 0..200 {
            let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let ab = hamming_loss(&a, &b, &nodes).unwrap();
            let ba = hamming_loss(&b, &a, &nodes).unwrap();
            let ac = hamming_loss(&a, &c, &nodes).unwrap();
            let cb = hamming_loss(&c, &b, &nodes).unwrap();
            assert_eq!(ab, ba);
            assert_eq!(hamming_loss(&a, &a, &nodes).unwrap(), 0);
            assert!(ab <= ac + cb);
        }
    }

    #[test]
    fn clamp_folds_energy_exactly() {
        let g = toy_graph();
        let inst = toy_instance();
        let mut rng = StdRng::seed_from_u64(17);
        let w = WeightVector {
            values: (0..g.template.dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let pot = g.condition(&w, &inst).unwrap();
        let fixed: Labels = [(1, 2)].into_iter().collect();
        let clamped = pot.clamp(&fixed).unwrap();
        // energies agree at the clamped labels
        let full = pot.energy(&[2, 1, 0]);
        let reduced = clamped.energy(&[1, 0]);
        assert!((full - reduced).abs() < 1e-12);
    }
}
