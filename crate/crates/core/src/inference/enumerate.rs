//! Exhaustive enumeration oracle.
//!
//! Exact answers for every inference query by brute-force iteration over the
//! state space, refused above a configurable cap.  Used as the testing oracle
//! for BP and as the exact backend of the objectives.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{ceil, exp, log2, weighted_lse, LseAccumulator, TEMP_SNAP};
use crate::model::{Labels, LogPotentials, NodeId};

use super::InferenceResult;

/// Default cap: 2^24 states.
pub const DEFAULT_STATE_CAP_LOG2: u32 = 24;

/// Inference query answered exactly.
#[derive(Clone, Debug)]
pub enum Query {
    LogPartition,
    Marginals,
    Map,
    /// Sum out everything except `max_nodes` at temperature `eps_h`, then
    /// maximize.  Beliefs are `p^{ε_h}(h | argmax)`.
    MarginalMap { max_nodes: BTreeSet<NodeId>, eps_h: f64 },
    /// Exact beliefs of the temperature-controlled joint
    /// `p^{(ε_y, ε_h)}(y, h)` over the potentials as given (loss augmentation,
    /// if any, must already be applied).  `log_partition` carries the outer
    /// annealed value `ε_y log Σ_y exp(v(y)/ε_y)` with
    /// `v(y) = ε_h log Σ_h exp(E(y, h)/ε_h)`.
    AnnealedJoint { max_nodes: BTreeSet<NodeId>, eps_y: f64, eps_h: f64 },
}

/// Odometer over the given cardinalities in lexicographic order (index 0 most
/// significant), starting at all-zeros.
struct Odometer<'a> {
    cards: &'a [usize],
    state: Vec<usize>,
    done: bool,
}

impl<'a> Odometer<'a> {
    fn new(cards: &'a [usize]) -> Self {
        Odometer { cards, state: vec![0; cards.len()], done: false }
    }

    fn next(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        Some(&self.state)
    }

    fn advance(&mut self) {
        for i in (0..self.cards.len()).rev() {
            self.state[i] += 1;
            if self.state[i] < self.cards[i] {
                return;
            }
            self.state[i] = 0;
        }
        self.done = true;
    }
}

fn check_cap(cards: &[usize], cap_log2: u32) -> Result<()> {
    let mut bits = 0.0f64;
    for &c in cards {
        bits += log2(c as f64);
    }
    if bits > cap_log2 as f64 {
        return Err(Error::StateSpaceTooLarge {
            states_log2: ceil(bits) as u32,
            cap_log2,
        });
    }
    Ok(())
}

fn point_result(pot: &LogPotentials, state: &[usize], value: f64) -> InferenceResult {
    let node_beliefs = state
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut b = vec![0.0; pot.cards[i]];
            b[l] = 1.0;
            b
        })
        .collect();
    let edge_beliefs = pot
        .edges
        .iter()
        .map(|&(u, v)| {
            let mut t = vec![0.0; pot.cards[u] * pot.cards[v]];
            t[state[u] * pot.cards[v] + state[v]] = 1.0;
            t
        })
        .collect();
    InferenceResult {
        node_beliefs,
        edge_beliefs,
        log_partition: value,
        decoding: Some(
            pot.node_ids
                .iter()
                .zip(state)
                .map(|(&n, &l)| (n, l))
                .collect(),
        ),
        converged: true,
        iterations: 0,
    }
}

/// Belief accumulator over nodes and edges.
struct BeliefAcc {
    nodes: Vec<Vec<f64>>,
    edges: Vec<Vec<f64>>,
    total: f64,
}

impl BeliefAcc {
    fn new(pot: &LogPotentials) -> Self {
        BeliefAcc {
            nodes: pot.cards.iter().map(|&c| vec![0.0; c]).collect(),
            edges: pot
                .edges
                .iter()
                .map(|&(u, v)| vec![0.0; pot.cards[u] * pot.cards[v]])
                .collect(),
            total: 0.0,
        }
    }

    fn push(&mut self, pot: &LogPotentials, state: &[usize], weight: f64) {
        if weight == 0.0 {
            return;
        }
        self.total += weight;
        for (i, &l) in state.iter().enumerate() {
            self.nodes[i][l] += weight;
        }
        for (k, &(u, v)) in pot.edges.iter().enumerate() {
            self.edges[k][state[u] * pot.cards[v] + state[v]] += weight;
        }
    }

    fn normalized(mut self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        if self.total > 0.0 {
            for b in self.nodes.iter_mut().chain(self.edges.iter_mut()) {
                for v in b.iter_mut() {
                    *v /= self.total;
                }
            }
        }
        (self.nodes, self.edges)
    }
}

pub fn enumerate(pot: &LogPotentials, query: &Query, cap_log2: u32) -> Result<InferenceResult> {
    check_cap(&pot.cards, cap_log2)?;
    match query {
        Query::LogPartition => {
            let mut acc = LseAccumulator::new();
            for_each_state(&pot.cards, |s| acc.push(pot.energy(s)));
            Ok(InferenceResult {
                node_beliefs: Vec::new(),
                edge_beliefs: Vec::new(),
                log_partition: acc.value(),
                decoding: None,
                converged: true,
                iterations: 0,
            })
        }
        Query::Marginals => {
            let mut shift = f64::NEG_INFINITY;
            for_each_state(&pot.cards, |s| shift = shift.max(pot.energy(s)));
            let mut acc = BeliefAcc::new(pot);
            for_each_state(&pot.cards, |s| {
                acc.push(pot, s, exp(pot.energy(s) - shift));
            });
            let total = acc.total;
            let (nodes, edges) = acc.normalized();
            Ok(InferenceResult {
                node_beliefs: nodes,
                edge_beliefs: edges,
                log_partition: shift + crate::math::ln(total),
                decoding: None,
                converged: true,
                iterations: 0,
            })
        }
        Query::Map => {
            let mut best_state: Option<Vec<usize>> = None;
            let mut best = f64::NEG_INFINITY;
            for_each_state(&pot.cards, |s| {
                let e = pot.energy(s);
                if e > best {
                    best = e;
                    best_state = Some(s.to_vec());
                }
            });
            let state = best_state.unwrap_or_default();
            Ok(point_result(pot, &state, best))
        }
        Query::MarginalMap { max_nodes, eps_h } => {
            let split = BlockSplit::new(pot, max_nodes);
            let mut best_y: Option<Vec<usize>> = None;
            let mut best = f64::NEG_INFINITY;
            split.for_each_y(|y_state, full| {
                let v = split.annealed_over_h(pot, full, *eps_h);
                if v > best {
                    best = v;
                    best_y = Some(y_state.to_vec());
                }
            });
            let y_state = best_y.expect("non-empty state space");
            // conditional beliefs p^{eps_h}(h | y*)
            let acc = split.conditional_beliefs(pot, &y_state, *eps_h);
            let (nodes, edges) = acc.normalized();
            Ok(InferenceResult {
                node_beliefs: nodes,
                edge_beliefs: edges,
                log_partition: best,
                decoding: Some(split.labels_for_y(pot, &y_state)),
                converged: true,
                iterations: 0,
            })
        }
        Query::AnnealedJoint { max_nodes, eps_y, eps_h } => {
            let split = BlockSplit::new(pot, max_nodes);
            // pass 1: v(y) for every y assignment
            let mut values: Vec<f64> = Vec::new();
            split.for_each_y(|_, full| {
                values.push(split.annealed_over_h(pot, full, *eps_h));
            });
            let value = weighted_lse(&values, *eps_y);
            // outer distribution q(y)
            let q: Vec<f64> = if *eps_y < TEMP_SNAP {
                let mx = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                // lexicographically first argmax gets all the mass
                let first = values.iter().position(|&v| v >= mx - 0.0).unwrap_or(0);
                let mut q = vec![0.0; values.len()];
                q[first] = 1.0;
                q
            } else {
                let mx = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut q: Vec<f64> = values.iter().map(|&v| exp((v - mx) / eps_y)).collect();
                let z: f64 = q.iter().sum();
                for v in q.iter_mut() {
                    *v /= z;
                }
                q
            };
            // pass 2: accumulate joint beliefs q(y)·p^{eps_h}(h|y)
            let mut acc = BeliefAcc::new(pot);
            let mut yi = 0usize;
            split.for_each_y(|y_state, _| {
                if q[yi] > 0.0 {
                    let cond = split.conditional_beliefs(pot, y_state, *eps_h);
                    let total = cond.total;
                    if total > 0.0 {
                        for (i, b) in cond.nodes.iter().enumerate() {
                            for (l, &w) in b.iter().enumerate() {
                                acc.nodes[i][l] += q[yi] * w / total;
                            }
                        }
                        for (k, b) in cond.edges.iter().enumerate() {
                            for (j, &w) in b.iter().enumerate() {
                                acc.edges[k][j] += q[yi] * w / total;
                            }
                        }
                        acc.total += q[yi];
                    }
                }
                yi += 1;
            });
            let decoding = if *eps_y < TEMP_SNAP {
                let mx = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let first = values.iter().position(|&v| v >= mx).unwrap_or(0);
                let mut y_state = vec![0usize; split.y_local.len()];
                split.unrank_y(first, &mut y_state);
                Some(split.labels_for_y(pot, &y_state))
            } else {
                None
            };
            let (nodes, edges) = acc.normalized();
            Ok(InferenceResult {
                node_beliefs: nodes,
                edge_beliefs: edges,
                log_partition: value,
                decoding,
                converged: true,
                iterations: 0,
            })
        }
    }
}

/// Value-only form of [`Query::AnnealedJoint`]:
/// `ε_y log Σ_y exp(v(y)/ε_y)` with `v(y) = ε_h log Σ_h exp(E(y, h)/ε_h)`,
/// exact max in either position below the snap threshold.
pub fn annealed_value(
    pot: &LogPotentials,
    max_nodes: &BTreeSet<NodeId>,
    eps_y: f64,
    eps_h: f64,
    cap_log2: u32,
) -> Result<f64> {
    check_cap(&pot.cards, cap_log2)?;
    let split = BlockSplit::new(pot, max_nodes);
    let mut values: Vec<f64> = Vec::new();
    split.for_each_y(|_, full| {
        values.push(split.annealed_over_h(pot, full, eps_h));
    });
    Ok(weighted_lse(&values, eps_y))
}

fn for_each_state<F: FnMut(&[usize])>(cards: &[usize], mut f: F) {
    let mut odo = Odometer::new(cards);
    while let Some(s) = odo.next() {
        f(s);
        odo.advance();
    }
}

/// Partition of the local nodes into a max/outer block (`y_local`) and a
/// sum/inner block (`h_local`).
struct BlockSplit {
    y_local: Vec<usize>,
    h_local: Vec<usize>,
    y_cards: Vec<usize>,
    h_cards: Vec<usize>,
}

impl BlockSplit {
    fn new(pot: &LogPotentials, max_nodes: &BTreeSet<NodeId>) -> Self {
        let y_local: Vec<usize> = (0..pot.num_nodes())
            .filter(|&i| max_nodes.contains(&pot.node_ids[i]))
            .collect();
        let h_local: Vec<usize> = (0..pot.num_nodes())
            .filter(|&i| !max_nodes.contains(&pot.node_ids[i]))
            .collect();
        let y_cards = y_local.iter().map(|&i| pot.cards[i]).collect();
        let h_cards = h_local.iter().map(|&i| pot.cards[i]).collect();
        BlockSplit { y_local, h_local, y_cards, h_cards }
    }

    /// Calls `f(y_state, full_state_template)` for every y-block assignment;
    /// the template has the y positions filled in and zeros elsewhere.
    fn for_each_y<F: FnMut(&[usize], &mut [usize])>(&self, mut f: F) {
        let n = self.y_local.len() + self.h_local.len();
        let mut full = vec![0usize; n];
        for_each_state(&self.y_cards, |y_state| {
            for (&pos, &l) in self.y_local.iter().zip(y_state) {
                full[pos] = l;
            }
            f(y_state, &mut full);
        });
    }

    /// `ε·log Σ_h exp(E(y, h)/ε)` (max over h below snap) with the y block
    /// already written into `full`.
    fn annealed_over_h(&self, pot: &LogPotentials, full: &mut [usize], eps_h: f64) -> f64 {
        let mut vals: Vec<f64> = Vec::new();
        for_each_state(&self.h_cards, |h_state| {
            for (&pos, &l) in self.h_local.iter().zip(h_state) {
                full[pos] = l;
            }
            vals.push(pot.energy(full));
        });
        weighted_lse(&vals, eps_h)
    }

    /// Unnormalized conditional beliefs `p^{ε_h}(h | y)`; max-block nodes get
    /// point masses at `y_state` (argmax of h below snap).
    fn conditional_beliefs(&self, pot: &LogPotentials, y_state: &[usize], eps_h: f64) -> BeliefAcc {
        let n = self.y_local.len() + self.h_local.len();
        let mut full = vec![0usize; n];
        for (&pos, &l) in self.y_local.iter().zip(y_state) {
            full[pos] = l;
        }
        let mut acc = BeliefAcc::new(pot);
        if eps_h < TEMP_SNAP {
            // point mass on the lexicographically-first argmax over h
            let mut best = f64::NEG_INFINITY;
            let mut best_h: Option<Vec<usize>> = None;
            for_each_state(&self.h_cards, |h_state| {
                for (&pos, &l) in self.h_local.iter().zip(h_state) {
                    full[pos] = l;
                }
                let e = pot.energy(&full);
                if e > best {
                    best = e;
                    best_h = Some(h_state.to_vec());
                }
            });
            if let Some(h_state) = best_h {
                for (&pos, &l) in self.h_local.iter().zip(&h_state) {
                    full[pos] = l;
                }
                acc.push(pot, &full, 1.0);
            } else {
                acc.push(pot, &full, 1.0); // no hidden nodes at all
            }
        } else {
            let mut shift = f64::NEG_INFINITY;
            for_each_state(&self.h_cards, |h_state| {
                for (&pos, &l) in self.h_local.iter().zip(h_state) {
                    full[pos] = l;
                }
                shift = shift.max(pot.energy(&full));
            });
            for_each_state(&self.h_cards, |h_state| {
                for (&pos, &l) in self.h_local.iter().zip(h_state) {
                    full[pos] = l;
                }
                acc.push(pot, &full, exp((pot.energy(&full) - shift) / eps_h));
            });
        }
        acc
    }

    fn labels_for_y(&self, pot: &LogPotentials, y_state: &[usize]) -> Labels {
        self.y_local
            .iter()
            .zip(y_state)
            .map(|(&i, &l)| (pot.node_ids[i], l))
            .collect()
    }

    /// Writes the `rank`-th y assignment (lexicographic) into `out`.
    fn unrank_y(&self, rank: usize, out: &mut [usize]) {
        let mut r = rank;
        for i in (0..self.y_cards.len()).rev() {
            out[i] = r % self.y_cards[i];
            r /= self.y_cards[i];
        }
    }
}
