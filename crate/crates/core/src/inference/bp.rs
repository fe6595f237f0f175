//! Loopy belief propagation with per-variable temperatures.
//!
//! One engine covers sum-product (ρ ≡ 1), max-product (ρ ≡ 0), mixed-product
//! (ρ = 0 on the decode block, ε on the rest) and the fully weighted variant.
//! Messages use a synchronous flooding schedule with damping; all arithmetic
//! is log-space with max-shifted reductions.  Disconnected components are
//! handled transparently (their contributions add).

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{ln, normalize_log, weighted_lse, TEMP_SNAP};
use crate::model::{Labels, LogPotentials, NodeId};

use super::{clamped_annealed_bp, InferenceResult, VariableWeights};

#[derive(Clone, Copy, Debug)]
pub struct BpOptions {
    pub max_iters: usize,
    /// Fraction of the old message kept per update.
    pub damping: f64,
    /// Convergence threshold on the max absolute message residual.
    pub tol: f64,
    /// Coordinate-ascent sweeps refining the mixed-product decoding; each
    /// sweep re-optimizes every max node against the others exactly.  Costs
    /// one clamped run per max node per sweep — set to 0 on large decode
    /// blocks.
    pub decode_polish: usize,
}

impl Default for BpOptions {
    fn default() -> Self {
        // tol is tighter than strictly needed for beliefs so that the Bethe
        // log-partition is tree-exact to ~1e-10
        BpOptions { max_iters: 100, damping: 0.5, tol: 1e-9, decode_polish: 2 }
    }
}

/// Raw state of a converged (or max-iters) message-passing run.
pub(crate) struct BpRun {
    /// 2 messages per edge k: index 2k is a→b (length card_b), 2k+1 is b→a.
    pub msgs: Vec<Vec<f64>>,
    /// Per node: θ_u + Σ incoming messages.
    pub pre: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

pub(crate) fn run_bp(pot: &LogPotentials, weights: &VariableWeights, opts: &BpOptions) -> BpRun {
    let n = pot.num_nodes();
    // incoming message indices per node
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, &(a, b)) in pot.edges.iter().enumerate() {
        incoming[b].push(2 * k);
        incoming[a].push(2 * k + 1);
    }
    let mut msgs: Vec<Vec<f64>> = Vec::with_capacity(2 * pot.edges.len());
    for &(a, b) in &pot.edges {
        msgs.push(vec![0.0; pot.cards[b]]);
        msgs.push(vec![0.0; pot.cards[a]]);
    }
    let compute_pre = |msgs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|u| {
                let mut p = pot.unary[u].clone();
                for &m in &incoming[u] {
                    for (ps, ms) in p.iter_mut().zip(&msgs[m]) {
                        *ps += *ms;
                    }
                }
                p
            })
            .collect()
    };
    // sequential schedule: directed messages ordered leaves-toward-root then
    // root-toward-leaves per BFS component, so trees converge in two sweeps;
    // damping is only needed (and applied) on loopy graphs
    let order = message_order(pot);
    let damping = if pot.is_forest() { 0.0 } else { opts.damping };
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iters {
        iterations = it + 1;
        let mut residual: f64 = 0.0;
        for &m in &order {
            let k = m / 2;
            let (a, b) = pot.edges[k];
            let (src, dst) = if m % 2 == 0 { (a, b) } else { (b, a) };
            let (cs, cd) = (pot.cards[src], pot.cards[dst]);
            let table = &pot.pairwise[k];
            // belief base at the source, excluding the reverse message
            let mut base = pot.unary[src].clone();
            for &im in &incoming[src] {
                if im == m ^ 1 {
                    continue;
                }
                for (bs, ms) in base.iter_mut().zip(&msgs[im]) {
                    *bs += *ms;
                }
            }
            let mut fresh = vec![0.0; cd];
            let mut scratch = vec![0.0; cs];
            for (sd, out) in fresh.iter_mut().enumerate() {
                for (ss, sc) in scratch.iter_mut().enumerate() {
                    let t = if m % 2 == 0 { table[ss * cd + sd] } else { table[sd * cs + ss] };
                    *sc = base[ss] + t;
                }
                *out = weighted_lse(&scratch, weights.rho[src]);
            }
            shift_to_zero_max(&mut fresh);
            let old = &mut msgs[m];
            for (o, f) in old.iter_mut().zip(fresh) {
                let next = damping * *o + (1.0 - damping) * f;
                residual = residual.max((next - *o).abs());
                *o = next;
            }
            let _ = dst;
        }
        if residual < opts.tol {
            converged = true;
            break;
        }
    }
    let pre = compute_pre(&msgs);
    BpRun { msgs, pre, converged, iterations }
}

/// Directed-message schedule: BFS depths per component, all deeper→shallower
/// messages first (deepest sources first), then the rest shallow-to-deep.
fn message_order(pot: &LogPotentials) -> Vec<usize> {
    let n = pot.num_nodes();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, &(a, b)) in pot.edges.iter().enumerate() {
        adj[a].push((b, 2 * k));
        adj[b].push((a, 2 * k + 1));
    }
    let mut depth = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        if depth[root] != usize::MAX {
            continue;
        }
        depth[root] = 0;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    let mut up: Vec<(usize, usize)> = Vec::new();
    let mut down: Vec<(usize, usize)> = Vec::new();
    for (u, ns) in adj.iter().enumerate() {
        for &(v, m) in ns {
            if depth[u] > depth[v] {
                up.push((depth[u], m));
            } else {
                down.push((depth[u], m));
            }
        }
    }
    up.sort_unstable_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
    down.sort_unstable();
    up.into_iter().chain(down).map(|(_, m)| m).collect()
}

fn shift_to_zero_max(m: &mut [f64]) {
    let mx = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx.is_finite() {
        for v in m.iter_mut() {
            *v -= mx;
        }
    }
}

/// Normalized belief from log-scores at temperature ρ; below the snap
/// threshold the mass is spread uniformly over the argmax set.
fn belief_from(scores: &[f64], rho: f64) -> Vec<f64> {
    if rho < TEMP_SNAP {
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = scores
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= mx - 1e-12)
            .map(|(i, _)| i)
            .collect();
        let mut b = vec![0.0; scores.len()];
        for &i in &ties {
            b[i] = 1.0 / ties.len() as f64;
        }
        b
    } else {
        let mut s: Vec<f64> = scores.iter().map(|&v| v / rho).collect();
        normalize_log(&mut s);
        s
    }
}

fn node_beliefs(run: &BpRun, weights: &VariableWeights) -> Vec<Vec<f64>> {
    run.pre
        .iter()
        .zip(&weights.rho)
        .map(|(p, &r)| belief_from(p, r))
        .collect()
}

fn edge_beliefs(pot: &LogPotentials, run: &BpRun, weights: &VariableWeights) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(pot.edges.len());
    for (k, &(a, b)) in pot.edges.iter().enumerate() {
        let (ca, cb) = (pot.cards[a], pot.cards[b]);
        let table = &pot.pairwise[k];
        let rho = weights.rho[a].max(weights.rho[b]);
        let mut t = vec![0.0; ca * cb];
        for sa in 0..ca {
            let base_a = run.pre[a][sa] - run.msgs[2 * k + 1][sa];
            for sb in 0..cb {
                let base_b = run.pre[b][sb] - run.msgs[2 * k][sb];
                t[sa * cb + sb] = table[sa * cb + sb] + base_a + base_b;
            }
        }
        out.push(belief_from(&t, rho));
    }
    out
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().map(|&v| if v > 0.0 { -v * ln(v) } else { 0.0 }).sum()
}

/// Temperature-weighted Bethe free-energy value at the current beliefs.
/// For ρ ≡ 1 this is the standard Bethe approximation of log Z, exact on
/// trees; for ρ ≡ 0 the entropy terms vanish and it degenerates to the
/// expected energy.
fn weighted_bethe(
    pot: &LogPotentials,
    nb: &[Vec<f64>],
    eb: &[Vec<f64>],
    weights: &VariableWeights,
) -> f64 {
    let n = pot.num_nodes();
    let mut deg = vec![0usize; n];
    let mut value = pot.constant;
    for (k, &(a, b)) in pot.edges.iter().enumerate() {
        deg[a] += 1;
        deg[b] += 1;
        let rho_e = weights.rho[a].max(weights.rho[b]);
        let t = &pot.pairwise[k];
        let be = &eb[k];
        for (p, th) in be.iter().zip(t) {
            value += p * th;
        }
        value += rho_e * entropy(be);
    }
    for u in 0..n {
        for (p, th) in nb[u].iter().zip(&pot.unary[u]) {
            value += p * th;
        }
        value += weights.rho[u] * (1.0 - deg[u] as f64) * entropy(&nb[u]);
    }
    value
}

/// Sequential decode of `decode_set` (local indices): repeatedly commits the
/// most confident undecoded node to its belief argmax (ties toward the
/// lowest label), clamps it, and re-propagates messages outward along a
/// breadth-first tree from the clamped node.  The re-propagation is exact on
/// trees, so each commitment conditions on all earlier ones.
fn sequential_decode(
    pot: &LogPotentials,
    weights: &VariableWeights,
    run: &BpRun,
    decode_set: &[usize],
) -> Vec<usize> {
    let n = pot.num_nodes();
    // adjacency: (edge index, neighbor, self is the table's row index)
    let mut adj: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); n];
    for (k, &(a, b)) in pot.edges.iter().enumerate() {
        adj[a].push((k, b, true));
        adj[b].push((k, a, false));
    }
    let mut unary = pot.unary.clone();
    let mut msgs = run.msgs.clone();
    let score_of = |unary: &[Vec<f64>], msgs: &[Vec<f64>], u: usize| -> Vec<f64> {
        let mut s = unary[u].clone();
        for &(k, _, u_is_row) in &adj[u] {
            let m = if u_is_row { &msgs[2 * k + 1] } else { &msgs[2 * k] };
            for (sv, mv) in s.iter_mut().zip(m) {
                *sv += *mv;
            }
        }
        s
    };
    let mut decoded: Vec<Option<usize>> = vec![None; n];
    let mut remaining: Vec<usize> = decode_set.to_vec();
    while !remaining.is_empty() {
        let mut pick = 0usize;
        let mut pick_label = 0usize;
        let mut pick_gap = f64::NEG_INFINITY;
        for (idx, &u) in remaining.iter().enumerate() {
            let s = score_of(&unary, &msgs, u);
            let mut best = 0usize;
            for l in 1..s.len() {
                if s[l] > s[best] + 1e-12 {
                    best = l;
                }
            }
            let runner_up = s
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != best)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            let gap = s[best] - runner_up;
            if gap > pick_gap {
                pick = idx;
                pick_gap = gap;
                pick_label = best;
            }
        }
        let u = remaining.swap_remove(pick);
        decoded[u] = Some(pick_label);
        for (l, v) in unary[u].iter_mut().enumerate() {
            if l != pick_label {
                *v = f64::NEG_INFINITY;
            }
        }
        // breadth-first outward re-propagation from the clamped node
        let mut seen = vec![false; n];
        seen[u] = true;
        let mut queue = alloc::collections::VecDeque::from(vec![u]);
        while let Some(p) = queue.pop_front() {
            for &(k, q, p_is_row) in &adj[p] {
                if seen[q] {
                    continue;
                }
                seen[q] = true;
                // recompute the message p→q from scratch (no damping)
                let mut base = unary[p].clone();
                for &(k2, _, p_is_row2) in &adj[p] {
                    if k2 == k {
                        continue;
                    }
                    let m = if p_is_row2 { &msgs[2 * k2 + 1] } else { &msgs[2 * k2] };
                    for (bv, mv) in base.iter_mut().zip(m) {
                        *bv += *mv;
                    }
                }
                let (cp, cq) = (pot.cards[p], pot.cards[q]);
                let table = &pot.pairwise[k];
                let mut out = vec![0.0; cq];
                let mut scratch = vec![0.0; cp];
                for (sq, o) in out.iter_mut().enumerate() {
                    for (sp, sc) in scratch.iter_mut().enumerate() {
                        *sc = base[sp]
                            + if p_is_row { table[sp * cq + sq] } else { table[sq * cp + sp] };
                    }
                    *o = weighted_lse(&scratch, weights.rho[p]);
                }
                shift_to_zero_max(&mut out);
                msgs[if p_is_row { 2 * k } else { 2 * k + 1 }] = out;
                queue.push_back(q);
            }
        }
    }
    decode_set.iter().map(|&u| decoded[u].unwrap()).collect()
}

/// Sum-product BP: beliefs approximate marginals, `log_partition` is the
/// Bethe log-partition (exact on trees).
pub fn sum_product(pot: &LogPotentials, opts: &BpOptions) -> InferenceResult {
    let weights = VariableWeights::all_sum(pot);
    let run = run_bp(pot, &weights, opts);
    let nb = node_beliefs(&run, &weights);
    let eb = edge_beliefs(pot, &run, &weights);
    let log_partition = weighted_bethe(pot, &nb, &eb, &weights);
    InferenceResult {
        node_beliefs: nb,
        edge_beliefs: eb,
        log_partition,
        decoding: None,
        converged: run.converged,
        iterations: run.iterations,
    }
}

/// Max-product BP: `decoding` approximates the joint MAP (exact on trees),
/// `log_partition` is the decoded assignment's energy evaluated exactly.
pub fn max_product(pot: &LogPotentials, opts: &BpOptions) -> InferenceResult {
    let weights = VariableWeights::all_max(pot);
    let run = run_bp(pot, &weights, opts);
    let all: Vec<usize> = (0..pot.num_nodes()).collect();
    let labels = sequential_decode(pot, &weights, &run, &all);
    let energy = pot.energy(&labels);
    let mut nb = Vec::with_capacity(pot.num_nodes());
    for (u, &l) in labels.iter().enumerate() {
        let mut b = vec![0.0; pot.cards[u]];
        b[l] = 1.0;
        nb.push(b);
    }
    let eb = point_edge_beliefs(pot, &labels);
    InferenceResult {
        node_beliefs: nb,
        edge_beliefs: eb,
        log_partition: energy,
        decoding: Some(to_labels(pot, &all, &labels)),
        converged: run.converged,
        iterations: run.iterations,
    }
}

fn point_edge_beliefs(pot: &LogPotentials, labels: &[usize]) -> Vec<Vec<f64>> {
    pot.edges
        .iter()
        .map(|&(a, b)| {
            let mut t = vec![0.0; pot.cards[a] * pot.cards[b]];
            t[labels[a] * pot.cards[b] + labels[b]] = 1.0;
            t
        })
        .collect()
}

fn to_labels(pot: &LogPotentials, locals: &[usize], labels: &[usize]) -> Labels {
    locals
        .iter()
        .zip(labels)
        .map(|(&u, &l)| (pot.node_ids[u], l))
        .collect()
}

/// Mixed-product BP for (annealed) marginal MAP.
///
/// Nodes with ρ below the snap threshold are maximized, the rest are summed
/// at their temperature.  Max nodes are decoded sequentially with decoded
/// neighbors clamped; the sum block is then re-run conditioned on the
/// decoding, so the returned sum-node beliefs are `p^{ε}(h | x, ŷ)` and
/// `log_partition` is the decoded configuration's annealed score.
pub fn mixed_product(
    pot: &LogPotentials,
    weights: &VariableWeights,
    opts: &BpOptions,
) -> InferenceResult {
    let max_set: Vec<usize> = (0..pot.num_nodes()).filter(|&i| weights.is_max(i)).collect();
    if max_set.len() == pot.num_nodes() {
        return max_product(pot, opts);
    }
    let eps = weights
        .rho
        .iter()
        .cloned()
        .filter(|&r| r >= TEMP_SNAP)
        .fold(0.0f64, f64::max);
    if max_set.is_empty() {
        let scaled = pot.scale(1.0 / eps);
        let mut r = sum_product(&scaled, opts);
        r.log_partition *= eps;
        r.decoding = Some(Labels::new());
        return r;
    }
    let run = run_bp(pot, weights, opts);
    // polish 0 requests the cheap decode: per-node argmax of the converged
    // max-marginals, no re-propagation between commitments
    let labels: Vec<usize> = if opts.decode_polish == 0 {
        max_set
            .iter()
            .map(|&u| {
                let p = &run.pre[u];
                let mut best = 0;
                for (l, &v) in p.iter().enumerate() {
                    if v > p[best] + 1e-12 {
                        best = l;
                    }
                }
                best
            })
            .collect()
    } else {
        sequential_decode(pot, weights, &run, &max_set)
    };
    let mut extra_iters = 0usize;
    // coordinate ascent: re-optimize each decoded node with the rest held
    // fixed, using an exact clamped run per candidate node
    let icm_sweep = |fixed: &mut Labels, extra: &mut usize| -> bool {
        let mut changed = false;
        for &u in &max_set {
            let gid = pot.node_ids[u];
            let cur = fixed[&gid];
            let mut partial = fixed.clone();
            partial.remove(&gid);
            let r = clamped_annealed_bp(pot, &partial, eps, opts)
                .expect("decoded labels are in range by construction");
            *extra += r.iterations;
            let b = &r.node_beliefs[u];
            let mut best = cur;
            for (l, &p) in b.iter().enumerate() {
                if p > b[best] + 1e-12 {
                    best = l;
                }
            }
            if best != cur {
                fixed.insert(gid, best);
                changed = true;
            }
        }
        changed
    };
    // pairs of decoded nodes that interact directly or through a single sum
    // node; joint moves over such pairs escape optima where two labels must
    // change together
    let pairs: Vec<(usize, usize)> = {
        let is_max: Vec<bool> = (0..pot.num_nodes()).map(|i| weights.is_max(i)).collect();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); pot.num_nodes()];
        for &(a, b) in &pot.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut out = Vec::new();
        for &(a, b) in &pot.edges {
            if is_max[a] && is_max[b] {
                out.push((a.min(b), a.max(b)));
            }
        }
        for (w, ns) in adj.iter().enumerate() {
            if is_max[w] {
                continue;
            }
            for (i, &u) in ns.iter().enumerate() {
                for &v in &ns[i + 1..] {
                    if is_max[u] && is_max[v] {
                        out.push((u.min(v), u.max(v)));
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    };
    let pair_escape = |fixed: &mut Labels, extra: &mut usize| -> bool {
        let base = clamped_annealed_bp(pot, fixed, eps, opts)
            .expect("decoded labels are in range by construction");
        *extra += base.iterations;
        let mut best_score = base.log_partition;
        let mut best_move: Option<(NodeId, usize, NodeId, usize)> = None;
        for &(u, v) in &pairs {
            let gu = pot.node_ids[u];
            let gv = pot.node_ids[v];
            for a in 0..pot.cards[u] {
                let mut partial = fixed.clone();
                partial.insert(gu, a);
                partial.remove(&gv);
                let r = clamped_annealed_bp(pot, &partial, eps, opts)
                    .expect("decoded labels are in range by construction");
                *extra += r.iterations;
                let bel = &r.node_beliefs[v];
                let mut b = 0usize;
                for (l, &p) in bel.iter().enumerate() {
                    if p > bel[b] + 1e-12 {
                        b = l;
                    }
                }
                if a == fixed[&gu] && b == fixed[&gv] {
                    continue;
                }
                partial.insert(gv, b);
                let s = clamped_annealed_bp(pot, &partial, eps, opts)
                    .expect("decoded labels are in range by construction");
                *extra += s.iterations;
                if s.log_partition > best_score + 1e-9 {
                    best_score = s.log_partition;
                    best_move = Some((gu, a, gv, b));
                }
            }
        }
        match best_move {
            Some((gu, a, gv, b)) => {
                fixed.insert(gu, a);
                fixed.insert(gv, b);
                true
            }
            None => false,
        }
    };
    let polish = |fixed: &mut Labels, extra: &mut usize| {
        if opts.decode_polish == 0 {
            return;
        }
        let mut escapes_left = opts.decode_polish;
        loop {
            for _ in 0..opts.decode_polish {
                if !icm_sweep(fixed, extra) {
                    break;
                }
            }
            if escapes_left == 0 || !pair_escape(fixed, extra) {
                return;
            }
            escapes_left -= 1;
        }
    };
    let mut starts = vec![to_labels(pot, &max_set, &labels)];
    if opts.decode_polish > 0 {
        // second basin: the decode block of the joint MAP
        let mp = max_product(pot, opts);
        extra_iters += mp.iterations;
        if let Some(all) = mp.decoding {
            let in_block: Labels = max_set
                .iter()
                .map(|&u| (pot.node_ids[u], all[&pot.node_ids[u]]))
                .collect();
            if in_block != starts[0] {
                starts.push(in_block);
            }
        }
    }
    let mut best: Option<(Labels, InferenceResult)> = None;
    for mut fixed in starts {
        polish(&mut fixed, &mut extra_iters);
        let cond = clamped_annealed_bp(pot, &fixed, eps, opts)
            .expect("decoded labels are in range by construction");
        extra_iters += cond.iterations;
        if best
            .as_ref()
            .map_or(true, |(_, b)| cond.log_partition > b.log_partition + 1e-12)
        {
            best = Some((fixed, cond));
        }
    }
    let (fixed, mut cond) = best.expect("at least one decode candidate");
    cond.decoding = Some(fixed);
    cond.converged &= run.converged;
    cond.iterations = run.iterations + extra_iters;
    cond
}

/// Fully weighted BP: power messages at each node's own temperature.  The
/// beliefs approximate the per-block annealed marginals; `log_partition` is
/// the temperature-weighted Bethe value (a surrogate on loopy graphs).
pub fn weighted_product(
    pot: &LogPotentials,
    weights: &VariableWeights,
    opts: &BpOptions,
) -> InferenceResult {
    let run = run_bp(pot, weights, opts);
    let nb = node_beliefs(&run, weights);
    let eb = edge_beliefs(pot, &run, weights);
    let log_partition = weighted_bethe(pot, &nb, &eb, weights);
    InferenceResult {
        node_beliefs: nb,
        edge_beliefs: eb,
        log_partition,
        decoding: None,
        converged: run.converged,
        iterations: run.iterations,
    }
}
