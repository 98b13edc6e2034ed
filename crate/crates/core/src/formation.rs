//! Strategic tie-formation model: random meetings followed by a rational
//! investment choice over latent endowment vectors.
//!
//! Each node carries a K-dimensional endowment vector. A candidate j is
//! worth to i the ReLU-summed surplus of j's endowments over i's (direct
//! benefit) plus the depreciated surplus of j's neighbors (indirect
//! benefit). Pairs meet at random: previously connected pairs continue with
//! probability q, unconnected pairs meet with probability proportional to
//! truncated random-walk proximity. Connected ties must then survive the
//! choice procedure, which allocates investments proportional to benefit
//! under a unit sum-of-squares budget; a zero allocation dissolves the tie.
//!
//! All per-pair randomness is counter-based (seed, phase, pair), so the
//! simulator is reproducible and schedule-independent; the node-level loops
//! run under rayon when the `parallel` feature is on.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, UndirectedGraph};
use crate::temporal_graph::{PhaseConfig, PhaseSnapshot, TemporalNetwork};
use crate::tie_range::TieRange;
use crate::util::{mean_ci, pair_unit, MeanCi};
use crate::Threads;

/// N x K latent endowment vectors, row per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndowmentMatrix {
    num_nodes: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EndowmentMatrix {
    pub fn zeros(num_nodes: usize, dim: usize) -> Self {
        assert!(dim >= 1, "endowment dimension must be at least 1");
        Self { num_nodes, dim, data: vec![0.0; num_nodes * dim] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let num_nodes = rows.len();
        let dim = rows.first().map_or(0, |r| r.len());
        assert!(dim >= 1, "endowment dimension must be at least 1");
        let mut data = Vec::with_capacity(num_nodes * dim);
        for r in rows {
            assert_eq!(r.len(), dim);
            data.extend(r);
        }
        Self { num_nodes, dim, data }
    }

    /// I.i.d. lognormal entries; the heavy right tail supplies the endowment
    /// heterogeneity that makes benefits non-degenerate.
    pub fn lognormal(num_nodes: usize, dim: usize, mu: f64, sigma: f64, rng: &mut impl Rng) -> Self {
        let law = LogNormal::new(mu, sigma).expect("invalid lognormal parameters");
        let data = (0..num_nodes * dim).map(|_| law.sample(rng)).collect();
        Self { num_nodes, dim, data }
    }

    /// I.i.d. centered Gaussian entries (training initialization).
    pub fn gaussian(num_nodes: usize, dim: usize, sd: f64, rng: &mut impl Rng) -> Self {
        let data = (0..num_nodes * dim)
            .map(|_| {
                let u: f64 = rng.sample(rand_distr::StandardNormal);
                u * sd
            })
            .collect();
        Self { num_nodes, dim, data }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: NodeId) -> &[f64] {
        let i = i as usize;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: NodeId) -> &mut [f64] {
        let i = i as usize;
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_nodes as NodeId).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Simulator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Depreciation factor for friends-of-friends value, in (0, 1).
    pub delta: f64,
    /// Meeting continuation probability for connected pairs, in [0, 1].
    pub q: f64,
    /// Random-walk truncation length L (sums walk lengths 2..=L).
    pub walk_len: usize,
    /// Scale on walk proximity for unconnected meetings; resulting
    /// probabilities are clamped to [0, 1].
    pub meeting_scale: f64,
    /// Provisional investment for brand-new ties. `None` means "median of
    /// this phase's positive optimal investments" (0.5 when there are none).
    pub c_init: Option<f64>,
    /// Seconds scale S mapping investment to emitted duration:
    /// D = round(exp(c * S) - 1). log1p(D) then recovers c * S up to
    /// rounding, so generated data inverts the fitting target transform.
    pub duration_scale: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            delta: 0.2,
            q: 0.8,
            walk_len: 6,
            meeting_scale: 0.05,
            c_init: None,
            duration_scale: 100.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must be in (0,1), got {}", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::InvalidArgument(format!("q must be in [0,1], got {}", self.q)));
        }
        if self.walk_len < 2 {
            return Err(Error::InvalidArgument("walk_len must be at least 2".into()));
        }
        if self.meeting_scale < 0.0 {
            return Err(Error::InvalidArgument("meeting_scale must be nonnegative".into()));
        }
        if let Some(c) = self.c_init {
            if c <= 0.0 {
                return Err(Error::InvalidArgument("c_init must be positive".into()));
            }
        }
        if self.duration_scale <= 0.0 {
            return Err(Error::InvalidArgument("duration_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Per-node new-friend (met this phase) and existing-friend (choice
/// survivors) sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborSets {
    pub new_friends: Vec<BTreeSet<NodeId>>,
    pub existing: Vec<BTreeSet<NodeId>>,
}

impl NeighborSets {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            new_friends: vec![BTreeSet::new(); num_nodes],
            existing: vec![BTreeSet::new(); num_nodes],
        }
    }

    /// Candidate set M_i ∪ N_i, sorted.
    pub fn candidates(&self, i: NodeId) -> Vec<NodeId> {
        self.new_friends[i as usize].union(&self.existing[i as usize]).copied().collect()
    }

    /// Connected as an undirected tie: either side lists the other.
    pub fn connected(&self, i: NodeId, j: NodeId) -> bool {
        let (iu, ju) = (i as usize, j as usize);
        self.new_friends[iu].contains(&j)
            || self.existing[iu].contains(&j)
            || self.new_friends[ju].contains(&i)
            || self.existing[ju].contains(&i)
    }

    pub fn num_nodes(&self) -> usize {
        self.new_friends.len()
    }
}

/// Simulator state after some phase: the neighbor sets of that phase and the
/// directed investments backing them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub phase: usize,
    pub sets: NeighborSets,
    /// c_ij > 0 for j in N_i; new ties carry the provisional investment.
    pub investments: BTreeMap<(NodeId, NodeId), f64>,
}

impl SimState {
    /// Pre-simulation state: every edge of the seed graph is a fresh
    /// acquaintance awaiting its first rational evaluation.
    pub fn from_initial_graph(g: &UndirectedGraph, initial_investment: f64) -> Self {
        let mut sets = NeighborSets::empty(g.num_nodes());
        let mut investments = BTreeMap::new();
        for (u, v) in g.edges() {
            sets.new_friends[u as usize].insert(v);
            sets.new_friends[v as usize].insert(u);
            investments.insert((u, v), initial_investment);
            investments.insert((v, u), initial_investment);
        }
        Self { phase: 0, sets, investments }
    }
}

/// Row i of the sum over l = 2..=L of the random-walk matrix P^l. Isolated
/// nodes self-loop with probability 1 so P stays row-stochastic.
pub fn walk_proximity_row(g: &UndirectedGraph, i: NodeId, walk_len: usize) -> Vec<f64> {
    let n = g.num_nodes();
    let mut cur = vec![0.0; n];
    cur[i as usize] = 1.0;
    let mut acc = vec![0.0; n];
    let mut next = vec![0.0; n];
    for l in 1..=walk_len {
        next.iter_mut().for_each(|x| *x = 0.0);
        for x in 0..n {
            let px = cur[x];
            if px == 0.0 {
                continue;
            }
            let nbrs = g.neighbors(x as NodeId);
            if nbrs.is_empty() {
                next[x] += px;
            } else {
                let share = px / nbrs.len() as f64;
                for &y in nbrs {
                    next[y as usize] += share;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        if l >= 2 {
            for (a, c) in acc.iter_mut().zip(&cur) {
                *a += c;
            }
        }
    }
    acc
}

/// Meeting probability for a pair: q if connected in the previous phase,
/// otherwise scaled truncated walk proximity, clamped to [0, 1].
pub fn meeting_probability(i: NodeId, j: NodeId, prev: &UndirectedGraph, params: &ModelParams) -> f64 {
    debug_assert_ne!(i, j);
    if prev.has_edge(i, j) {
        params.q
    } else {
        let prox = walk_proximity_row(prev, i, params.walk_len)[j as usize];
        (params.meeting_scale * prox).clamp(0.0, 1.0)
    }
}

/// Benefit j brings to i, split into the direct endowment surplus and the
/// depreciated surplus of j's neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Benefit {
    pub direct: f64,
    pub indirect: f64,
}

impl Benefit {
    pub fn total(&self) -> f64 {
        self.direct + self.indirect
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Benefit with an explicit neighbor list for j.
pub fn benefit_from_neighbors(
    w: &EndowmentMatrix,
    i: NodeId,
    j: NodeId,
    j_neighbors: &[NodeId],
    delta: f64,
) -> Benefit {
    let wi = w.row(i);
    let wj = w.row(j);
    let direct: f64 = wi.iter().zip(wj).map(|(&a, &b)| relu(b - a)).sum();
    let mut indirect = 0.0;
    for &l in j_neighbors {
        let wl = w.row(l);
        let s: f64 = wi.iter().zip(wl).map(|(&a, &b)| relu(b - a)).sum();
        indirect += delta * s;
    }
    Benefit { direct, indirect }
}

/// Benefit using j's previous-phase candidate set from the neighbor sets.
pub fn benefit(w: &EndowmentMatrix, i: NodeId, j: NodeId, sets_prev: &NeighborSets, delta: f64) -> Benefit {
    benefit_from_neighbors(w, i, j, &sets_prev.candidates(j), delta)
}

/// Closed-form optimal investments over a candidate set: proportional to
/// total benefit with a unit sum of squares whenever any benefit is
/// positive; all zero (full dissolution) in the degenerate all-zero case.
pub fn optimal_investment(
    w: &EndowmentMatrix,
    i: NodeId,
    candidates: &[NodeId],
    sets_prev: &NeighborSets,
    delta: f64,
) -> BTreeMap<NodeId, f64> {
    let benefits: Vec<f64> =
        candidates.iter().map(|&j| benefit(w, i, j, sets_prev, delta).total()).collect();
    let norm = benefits.iter().map(|b| b * b).sum::<f64>().sqrt();
    candidates
        .iter()
        .zip(&benefits)
        .map(|(&j, &b)| (j, if norm > 0.0 { b / norm } else { 0.0 }))
        .collect()
}

/// Ceiling on emitted durations. Keeps exp(c * S) inside u64 for any
/// parameterization; exactly representable in f64 so CSV round-trips.
const MAX_DURATION_S: f64 = 1e15;

fn emit_weights(c: f64, duration_scale: f64) -> (u64, u64) {
    let dur = ((c * duration_scale).exp() - 1.0).min(MAX_DURATION_S).round().max(0.0) as u64;
    // a call roughly every ten minutes, and at least one interaction so the
    // tie registers as present even when the duration rounds to zero
    (1 + dur / 600, dur)
}

/// Result of one simulation step: the next state and the snapshot of
/// interactions it emitted.
pub struct StepOutcome {
    pub state: SimState,
    pub snapshot: PhaseSnapshot,
}

struct NodeStep {
    /// Unconnected j > i that met i this phase.
    met: Vec<NodeId>,
    /// Choice-procedure survivors with their investments.
    kept: Vec<(NodeId, f64)>,
}

/// Advance the simulator by one phase.
///
/// 1. Every unordered pair draws a meeting: connected pairs from Bern(q),
///    unconnected pairs from scaled walk proximity on the previous
///    snapshot. Fresh meetings enter the new-friend sets with the
///    provisional investment.
/// 2. Each node allocates investments over its full previous candidate set;
///    a previously connected tie survives into the existing-friend set iff
///    the pair's meeting draw succeeded and the allocation is positive.
/// 3. Interactions are emitted per direction from the investments.
///
/// Draw outcomes depend only on (seed, phase, pair), never on thread
/// scheduling.
pub fn step(
    state: &SimState,
    prev: &UndirectedGraph,
    w: &EndowmentMatrix,
    params: &ModelParams,
    seed: u64,
    threads: Threads,
) -> Result<StepOutcome> {
    params.validate()?;
    let n = prev.num_nodes();
    debug_assert_eq!(state.sets.num_nodes(), n);
    debug_assert_eq!(w.num_nodes(), n);
    let next_phase = state.phase + 1;
    let stream = next_phase as u64;

    let per_node = |i: NodeId| -> NodeStep {
        // meetings with unconnected higher-indexed peers
        let mut met = Vec::new();
        if params.meeting_scale > 0.0 {
            let prox = walk_proximity_row(prev, i, params.walk_len);
            for j in (i + 1)..n as NodeId {
                if prev.has_edge(i, j) {
                    continue;
                }
                let p = (params.meeting_scale * prox[j as usize]).clamp(0.0, 1.0);
                if p > 0.0 && pair_unit(seed, stream, i, j) < p {
                    met.push(j);
                }
            }
        }
        // rational choice over the full previous candidate set
        let candidates = state.sets.candidates(i);
        let optimal = optimal_investment(w, i, &candidates, &state.sets, params.delta);
        let kept = optimal
            .into_iter()
            .filter(|&(j, c)| {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                c > 0.0 && pair_unit(seed, stream, a, b) < params.q
            })
            .collect();
        NodeStep { met, kept }
    };

    let nodes: Vec<NodeId> = (0..n as NodeId).collect();
    #[cfg(feature = "parallel")]
    let results: Vec<NodeStep> = crate::run_with_threads(threads, || {
        use rayon::prelude::*;
        nodes.par_iter().map(|&i| per_node(i)).collect()
    });
    #[cfg(not(feature = "parallel"))]
    let results: Vec<NodeStep> = {
        let _ = threads;
        nodes.iter().map(|&i| per_node(i)).collect()
    };

    // provisional investment for fresh ties: median positive allocation
    let c_init = params.c_init.unwrap_or_else(|| {
        let mut positive: Vec<f64> =
            results.iter().flat_map(|r| r.kept.iter().map(|&(_, c)| c)).collect();
        if positive.is_empty() {
            0.5
        } else {
            positive.sort_by(|a, b| a.partial_cmp(b).unwrap());
            positive[positive.len() / 2]
        }
    });

    let mut sets = NeighborSets::empty(n);
    let mut investments = BTreeMap::new();
    let mut snapshot = PhaseSnapshot::new(next_phase - 1, n);
    for (i, r) in results.iter().enumerate() {
        let i = i as NodeId;
        for &j in &r.met {
            sets.new_friends[i as usize].insert(j);
            sets.new_friends[j as usize].insert(i);
            investments.insert((i, j), c_init);
            investments.insert((j, i), c_init);
        }
        for &(j, c) in &r.kept {
            sets.existing[i as usize].insert(j);
            investments.insert((i, j), c);
        }
    }
    for (&(i, j), &c) in &investments {
        let (f, d) = emit_weights(c, params.duration_scale);
        snapshot.add(i, j, f, d);
    }
    Ok(StepOutcome { state: SimState { phase: next_phase, sets, investments }, snapshot })
}

/// A full simulation run: the emitted network plus per-phase states.
pub struct SimRun {
    pub net: TemporalNetwork,
    /// State after each emitted phase; `states[t]` backs `net` phase `t`.
    pub states: Vec<SimState>,
}

/// Run `num_phases` steps from a seed graph. The seed graph itself is not
/// emitted; its edges enter phase 0's choice procedure as fresh ties.
pub fn simulate(
    initial: &UndirectedGraph,
    w: &EndowmentMatrix,
    params: &ModelParams,
    num_phases: usize,
    seed: u64,
    threads: Threads,
) -> Result<SimRun> {
    params.validate()?;
    if num_phases == 0 {
        return Err(Error::InvalidArgument("simulation needs at least one phase".into()));
    }
    if w.num_nodes() != initial.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "endowment rows ({}) != graph nodes ({})",
            w.num_nodes(),
            initial.num_nodes()
        )));
    }
    let mut state = SimState::from_initial_graph(initial, params.c_init.unwrap_or(0.5));
    let mut graph = initial.clone();
    let mut snapshots = Vec::with_capacity(num_phases);
    let mut states = Vec::with_capacity(num_phases);
    for _ in 0..num_phases {
        let outcome = step(&state, &graph, w, params, seed, threads)?;
        graph = outcome.snapshot.undirected_view();
        snapshots.push(outcome.snapshot);
        state = outcome.state;
        states.push(state.clone());
    }
    let names = (0..initial.num_nodes()).map(|i| i.to_string()).collect();
    let config = PhaseConfig::new(1, num_phases as u32)?;
    Ok(SimRun { net: TemporalNetwork::from_parts(config, names, snapshots), states })
}

/// Mean benefit statistics grouped by the tie range of the snapshot's edges.
/// Means run over ordered pairs (both directions of every edge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitByRange {
    pub total_by_range: BTreeMap<TieRange, MeanCi>,
    pub direct_by_range: BTreeMap<TieRange, MeanCi>,
    /// Indirect benefit restricted to common neighbors of the endpoints,
    /// grouped by common-neighbor count; pairs without common neighbors are
    /// absent.
    pub indirect_by_common_neighbors: BTreeMap<usize, MeanCi>,
}

/// Benefit analyses over a snapshot graph, with candidate neighborhoods read
/// from the graph itself and tie ranges supplied by the caller.
pub fn benefit_by_range(
    g: &UndirectedGraph,
    w: &EndowmentMatrix,
    delta: f64,
    ranges: &BTreeMap<(NodeId, NodeId), TieRange>,
) -> BenefitByRange {
    let mut total: BTreeMap<TieRange, Vec<f64>> = BTreeMap::new();
    let mut direct: BTreeMap<TieRange, Vec<f64>> = BTreeMap::new();
    let mut by_cn: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for ((u, v), &r) in ranges.iter().map(|(p, r)| (*p, r)) {
        let common = g.common_neighbors(u, v);
        for (i, j) in [(u, v), (v, u)] {
            let b = benefit_from_neighbors(w, i, j, g.neighbors(j), delta);
            total.entry(r).or_default().push(b.total());
            direct.entry(r).or_default().push(b.direct);
            if !common.is_empty() {
                let restricted = benefit_from_neighbors(w, i, j, &common, delta).indirect;
                by_cn.entry(common.len()).or_default().push(restricted);
            }
        }
    }
    let collapse = |m: BTreeMap<TieRange, Vec<f64>>| {
        m.into_iter().filter_map(|(k, v)| mean_ci(v.iter().copied()).map(|ci| (k, ci))).collect()
    };
    BenefitByRange {
        total_by_range: collapse(total),
        direct_by_range: collapse(direct),
        indirect_by_common_neighbors: by_cn
            .into_iter()
            .filter_map(|(k, v)| mean_ci(v.iter().copied()).map(|ci| (k, ci)))
            .collect(),
    }
}
