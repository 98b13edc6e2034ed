//! Endowment inference: learn the latent vectors behind an observed
//! temporal network by gradient descent on the investment-matching loss.
//!
//! For a training phase t, each node's candidates are its neighbors in
//! phase t-1. Observed targets c are L1-normalized log durations at t;
//! predictions ĉ are a softmax over candidate benefits (direct plus
//! δ-depreciated indirect, read from the t-1 graph). The loss is the sum
//! over sampled nodes of the mean absolute ĉ-c gap on surviving candidates
//! plus the mean predicted investment on dissolved ones. Gradients are
//! hand-derived through the softmax, ReLU surpluses, and per-node means;
//! there is no autodiff here, which is why the finite-difference check in
//! the test suite matters.
//!
//! Per-epoch node sampling is degree^(3/4)-weighted with replacement. The
//! per-node gradient terms may be computed in parallel, but they are reduced
//! in sample order, so a given seed yields bit-identical endowments at any
//! thread count.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::{benefit_from_neighbors, BenefitByRange, EndowmentMatrix};
use crate::graph::{NodeId, UndirectedGraph};
use crate::temporal_graph::TemporalNetwork;
use crate::Threads;

/// Positive-sample discrepancy: absolute difference per the displayed
/// formulas (default), or squared error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LossKind {
    #[default]
    AbsoluteDifference,
    SquaredError,
}

/// Which duration weight defines the investment target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DurationMode {
    /// Outgoing D_ij only; inverts the simulator's per-direction emission
    /// exactly, so generate-then-fit round-trips are clean.
    #[default]
    Directed,
    /// Symmetrized D_ij + D_ji.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Endowment dimension K.
    pub dim: usize,
    /// Depreciation grid searched by [`fit`]; a single value pins δ.
    pub delta_grid: Vec<f64>,
    pub max_epochs: usize,
    pub nodes_per_epoch: usize,
    /// Held-out node budget; capped at half the eligible nodes.
    pub test_nodes: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Standard deviation of the Gaussian endowment initialization.
    pub init_sd: f64,
    pub seed: u64,
    /// Training phase t; candidates come from t-1. Phases are 0-based.
    pub train_phase: usize,
    /// Train on every consecutive phase pair instead of `train_phase` only.
    pub pool_phases: bool,
    pub loss_kind: LossKind,
    pub duration_mode: DurationMode,
    /// Stop when the held-out loss has not improved by `plateau_tol`
    /// (relative) for this many consecutive epochs.
    pub plateau_epochs: usize,
    pub plateau_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            dim: 4,
            delta_grid: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
            max_epochs: 500,
            nodes_per_epoch: 1000,
            test_nodes: 1000,
            learning_rate: 0.05,
            weight_decay: 1e-4,
            init_sd: 0.1,
            seed: 0,
            train_phase: 2,
            pool_phases: false,
            loss_kind: LossKind::AbsoluteDifference,
            duration_mode: DurationMode::Directed,
            plateau_epochs: 20,
            plateau_tol: 1e-3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dim must be positive".into()));
        }
        if self.delta_grid.is_empty() {
            return Err(Error::InvalidArgument("delta grid must be nonempty".into()));
        }
        if self.train_phase == 0 {
            return Err(Error::InvalidArgument("train_phase needs a preceding candidate phase".into()));
        }
        if self.nodes_per_epoch == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument("epoch schedule must be positive".into()));
        }
        Ok(())
    }
}

/// Observed investment targets for one node: L1-normalized log durations at
/// phase t over the candidates from t-1. Errors when every candidate's
/// duration is zero (the node is silent toward its past neighborhood).
pub fn target_investment(
    net: &TemporalNetwork,
    i: NodeId,
    t: usize,
    mode: DurationMode,
) -> Result<BTreeMap<NodeId, f64>> {
    if t == 0 {
        return Err(Error::InvalidArgument("targets need a preceding candidate phase".into()));
    }
    let prev = net.snapshot(t - 1)?.undirected_view();
    let snap = net.snapshot(t)?;
    let mut raw: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut denom = 0.0;
    for &j in prev.neighbors(i) {
        let d = match mode {
            DurationMode::Directed => snap.dur(i, j),
            DurationMode::Symmetric => snap.dur(i, j) + snap.dur(j, i),
        };
        let v = (d as f64).ln_1p();
        denom += v;
        raw.insert(j, v);
    }
    if raw.is_empty() {
        return Ok(BTreeMap::new());
    }
    if denom == 0.0 {
        return Err(Error::SilentNode { node: i, phase: t });
    }
    Ok(raw.into_iter().map(|(j, v)| (j, v / denom)).collect())
}

/// Softmax over candidate benefits: the model's predicted investments.
/// Empty when the node had no candidates.
pub fn predicted_investment(
    w: &EndowmentMatrix,
    i: NodeId,
    graph_prev: &UndirectedGraph,
    delta: f64,
) -> BTreeMap<NodeId, f64> {
    let candidates = graph_prev.neighbors(i);
    if candidates.is_empty() {
        return BTreeMap::new();
    }
    let benefits: Vec<f64> = candidates
        .iter()
        .map(|&j| benefit_from_neighbors(w, i, j, graph_prev.neighbors(j), delta).total())
        .collect();
    let max = benefits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = benefits.iter().map(|b| (b - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    candidates.iter().zip(exps).map(|(&j, e)| (j, e / z)).collect()
}

/// One node's training instance for a phase pair.
#[derive(Debug, Clone)]
pub struct NodeProblem {
    pub node: NodeId,
    /// Sorted neighbors at t-1.
    pub candidates: Vec<NodeId>,
    /// Aligned with `candidates`; `None` when the target denominator was
    /// zero (node skipped for the positive loss, kept for the negative).
    pub target: Option<Vec<f64>>,
    /// Aligned with `candidates`: still a neighbor at t.
    pub survivor: Vec<bool>,
}

/// Everything the loss needs for one (t-1, t) phase pair.
pub struct PhasePair {
    pub t: usize,
    pub graph_prev: UndirectedGraph,
    pub problems: Vec<NodeProblem>,
}

pub fn build_phase_pair(net: &TemporalNetwork, t: usize, mode: DurationMode) -> Result<PhasePair> {
    if t == 0 || t >= net.num_phases() {
        return Err(Error::PhaseOutOfRange { phase: t, num_phases: net.num_phases() });
    }
    let graph_prev = net.snapshot(t - 1)?.undirected_view();
    let graph_now = net.snapshot(t)?.undirected_view();
    let mut problems = Vec::new();
    for i in 0..graph_prev.num_nodes() as NodeId {
        let candidates: Vec<NodeId> = graph_prev.neighbors(i).to_vec();
        if candidates.is_empty() {
            continue;
        }
        let survivor: Vec<bool> = candidates.iter().map(|&j| graph_now.has_edge(i, j)).collect();
        let target = match target_investment(net, i, t, mode) {
            Ok(map) => Some(candidates.iter().map(|j| map[j]).collect()),
            Err(Error::SilentNode { .. }) => {
                log::debug!("phase {t}: node {i} silent toward candidates; positive loss skipped");
                None
            }
            Err(e) => return Err(e),
        };
        problems.push(NodeProblem { node: i, candidates, target, survivor });
    }
    Ok(PhasePair { t, graph_prev, problems })
}

/// Positive and negative loss parts; the total is their exact sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_pos: f64,
    pub l_neg: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.l_pos + self.l_neg
    }

    fn add(&mut self, other: LossBreakdown) {
        self.l_pos += other.l_pos;
        self.l_neg += other.l_neg;
    }
}

/// Per-node loss and, optionally, its gradient contribution as a sparse
/// row -> d/dW map.
fn node_loss_grad(
    w: &EndowmentMatrix,
    graph_prev: &UndirectedGraph,
    problem: &NodeProblem,
    delta: f64,
    kind: LossKind,
    mut grad: Option<&mut BTreeMap<NodeId, Vec<f64>>>,
) -> LossBreakdown {
    let i = problem.node;
    let cands = &problem.candidates;
    let n = cands.len();
    debug_assert!(n > 0);
    let dim = w.dim();

    let benefits: Vec<f64> = cands
        .iter()
        .map(|&j| benefit_from_neighbors(w, i, j, graph_prev.neighbors(j), delta).total())
        .collect();
    let max = benefits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = benefits.iter().map(|b| (b - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let softmax: Vec<f64> = exps.iter().map(|e| e / z).collect();

    let n_surv = problem.survivor.iter().filter(|&&s| s).count();
    let n_diss = n - n_surv;

    let mut out = LossBreakdown::default();
    // dL/d softmax per candidate
    let mut g_c = vec![0.0; n];
    for (a, &surv) in problem.survivor.iter().enumerate() {
        if surv {
            if let Some(target) = &problem.target {
                let diff = softmax[a] - target[a];
                match kind {
                    LossKind::AbsoluteDifference => {
                        out.l_pos += diff.abs() / n_surv as f64;
                        g_c[a] = if diff == 0.0 { 0.0 } else { diff.signum() / n_surv as f64 };
                    }
                    LossKind::SquaredError => {
                        out.l_pos += diff * diff / n_surv as f64;
                        g_c[a] = 2.0 * diff / n_surv as f64;
                    }
                }
            }
        } else {
            out.l_neg += softmax[a] / n_diss as f64;
            g_c[a] = 1.0 / n_diss as f64;
        }
    }

    if let Some(acc) = grad.as_deref_mut() {
        // softmax jacobian: dL/db_a = s_a * (g_a - sum_b g_b s_b)
        let dot: f64 = g_c.iter().zip(&softmax).map(|(g, s)| g * s).sum();
        let wi = w.row(i).to_vec();
        for (a, &j) in cands.iter().enumerate() {
            let gb = softmax[a] * (g_c[a] - dot);
            if gb == 0.0 {
                continue;
            }
            let wj = w.row(j);
            {
                let gj = acc.entry(j).or_insert_with(|| vec![0.0; dim]);
                for k in 0..dim {
                    if wj[k] > wi[k] {
                        gj[k] += gb;
                    }
                }
            }
            {
                let gi = acc.entry(i).or_insert_with(|| vec![0.0; dim]);
                for k in 0..dim {
                    if wj[k] > wi[k] {
                        gi[k] -= gb;
                    }
                }
            }
            for &l in graph_prev.neighbors(j) {
                let wl = w.row(l).to_vec();
                {
                    let gl = acc.entry(l).or_insert_with(|| vec![0.0; dim]);
                    for k in 0..dim {
                        if wl[k] > wi[k] {
                            gl[k] += gb * delta;
                        }
                    }
                }
                let gi = acc.entry(i).or_insert_with(|| vec![0.0; dim]);
                for k in 0..dim {
                    if wl[k] > wi[k] {
                        gi[k] -= gb * delta;
                    }
                }
            }
        }
    }
    out
}

/// Loss over a subset of a phase pair's problems (indices into
/// `pair.problems`).
pub fn loss(
    w: &EndowmentMatrix,
    pair: &PhasePair,
    delta: f64,
    kind: LossKind,
    indices: &[usize],
) -> LossBreakdown {
    let mut out = LossBreakdown::default();
    for &idx in indices {
        out.add(node_loss_grad(w, &pair.graph_prev, &pair.problems[idx], delta, kind, None));
    }
    out
}

/// Loss plus its dense gradient (row-major N x K) over a problem subset.
/// The per-node terms are reduced in index order regardless of threading.
pub fn loss_gradient(
    w: &EndowmentMatrix,
    pair: &PhasePair,
    delta: f64,
    kind: LossKind,
    indices: &[usize],
    threads: Threads,
) -> (LossBreakdown, Vec<f64>) {
    let per_node = |&idx: &usize| {
        let mut g = BTreeMap::new();
        let l = node_loss_grad(w, &pair.graph_prev, &pair.problems[idx], delta, kind, Some(&mut g));
        (l, g)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<(LossBreakdown, BTreeMap<NodeId, Vec<f64>>)> =
        crate::run_with_threads(threads, || {
            use rayon::prelude::*;
            indices.par_iter().map(per_node).collect()
        });
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(LossBreakdown, BTreeMap<NodeId, Vec<f64>>)> = {
        let _ = threads;
        indices.iter().map(per_node).collect()
    };

    let dim = w.dim();
    let mut grad = vec![0.0; w.num_nodes() * dim];
    let mut total = LossBreakdown::default();
    for (l, g) in parts {
        total.add(l);
        for (row, contrib) in g {
            let base = row as usize * dim;
            for k in 0..dim {
                grad[base + k] += contrib[k];
            }
        }
    }
    (total, grad)
}

/// Degree^(3/4) sampling weights over the candidate graph, the law used for
/// per-epoch node selection.
pub fn degree_sampling_weights(g: &UndirectedGraph) -> Vec<f64> {
    (0..g.num_nodes() as NodeId).map(|u| (g.degree(u) as f64).powf(0.75)).collect()
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxEpochs,
    Plateau,
    /// Loss went non-finite; the result holds the last finite state.
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
}

/// A trained endowment matrix with its learning curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutcome {
    pub delta: f64,
    pub w: EndowmentMatrix,
    pub learning_curve: Vec<EpochRecord>,
    pub final_test_loss: f64,
    pub stop: StopReason,
    pub test_count: usize,
}

struct TrainSetup {
    pairs: Vec<PhasePair>,
    /// Flattened (pair, problem) training pool.
    train_pool: Vec<(usize, usize)>,
    test_pool: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

fn prepare(net: &TemporalNetwork, config: &FitConfig) -> Result<TrainSetup> {
    config.validate()?;
    if net.num_phases() < 2 {
        return Err(Error::InvalidConfig("fitting needs at least two phases".into()));
    }
    let ts: Vec<usize> = if config.pool_phases {
        (1..net.num_phases()).collect()
    } else {
        if config.train_phase >= net.num_phases() {
            return Err(Error::PhaseOutOfRange {
                phase: config.train_phase,
                num_phases: net.num_phases(),
            });
        }
        vec![config.train_phase]
    };
    let pairs: Vec<PhasePair> =
        ts.into_iter().map(|t| build_phase_pair(net, t, config.duration_mode)).collect::<Result<_>>()?;
    let mut all: Vec<(usize, usize)> = Vec::new();
    for (pi, pair) in pairs.iter().enumerate() {
        for idx in 0..pair.problems.len() {
            all.push((pi, idx));
        }
    }
    if all.is_empty() {
        return Err(Error::InvalidConfig("no node has candidates in the training phases".into()));
    }
    // held-out split: uniform without replacement, capped at half the pool
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7e57_0000);
    let n_test = config.test_nodes.min(all.len() / 2);
    let mut is_test = vec![false; all.len()];
    if n_test > 0 {
        for i in index_sample(&mut rng, all.len(), n_test) {
            is_test[i] = true;
        }
    }
    let mut train_pool = Vec::new();
    let mut test_pool = Vec::new();
    for (i, entry) in all.into_iter().enumerate() {
        if is_test[i] {
            test_pool.push(entry);
        } else {
            train_pool.push(entry);
        }
    }
    let weights: Vec<f64> = train_pool
        .iter()
        .map(|&(pi, idx)| {
            let node = pairs[pi].problems[idx].node;
            (pairs[pi].graph_prev.degree(node) as f64).powf(0.75)
        })
        .collect();
    Ok(TrainSetup { pairs, train_pool, test_pool, weights })
}

fn eval_loss(
    w: &EndowmentMatrix,
    setup: &TrainSetup,
    pool: &[(usize, usize)],
    delta: f64,
    kind: LossKind,
) -> f64 {
    let mut total = LossBreakdown::default();
    for &(pi, idx) in pool {
        total.add(node_loss_grad(
            w,
            &setup.pairs[pi].graph_prev,
            &setup.pairs[pi].problems[idx],
            delta,
            kind,
            None,
        ));
    }
    total.total()
}

/// Train endowments at a fixed depreciation factor.
pub fn fit_with_delta(
    net: &TemporalNetwork,
    config: &FitConfig,
    delta: f64,
    threads: Threads,
) -> Result<FitOutcome> {
    let setup = prepare(net, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w = EndowmentMatrix::gaussian(net.num_nodes(), config.dim, config.init_sd, &mut rng);
    let sampler = WeightedIndex::new(&setup.weights)
        .map_err(|e| Error::InvalidConfig(format!("degenerate sampling weights: {e}")))?;

    let params = w.num_nodes() * w.dim();
    let mut m = vec![0.0; params];
    let mut v = vec![0.0; params];
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);

    let mut curve = Vec::with_capacity(config.max_epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut stop = StopReason::MaxEpochs;
    let mut checkpoint = w.clone();

    for epoch in 0..config.max_epochs {
        let sample: Vec<(usize, usize)> =
            (0..config.nodes_per_epoch).map(|_| setup.train_pool[sampler.sample(&mut rng)]).collect();

        // gradient, grouped per pair but reduced in a fixed order
        let mut grad = vec![0.0; params];
        let mut train = LossBreakdown::default();
        for (pi, pair) in setup.pairs.iter().enumerate() {
            let indices: Vec<usize> =
                sample.iter().filter(|&&(p, _)| p == pi).map(|&(_, idx)| idx).collect();
            if indices.is_empty() {
                continue;
            }
            let (l, g) = loss_gradient(&w, pair, delta, config.loss_kind, &indices, threads);
            train.add(l);
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }

        let step = epoch + 1;
        let bias1 = 1.0 - beta1.powi(step as i32);
        let bias2 = 1.0 - beta2.powi(step as i32);
        {
            let data = w.as_mut_slice();
            for p in 0..params {
                let g = grad[p] + config.weight_decay * data[p];
                m[p] = beta1 * m[p] + (1.0 - beta1) * g;
                v[p] = beta2 * v[p] + (1.0 - beta2) * g * g;
                let m_hat = m[p] / bias1;
                let v_hat = v[p] / bias2;
                data[p] -= config.learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }

        let test_loss = eval_loss(&w, &setup, &setup.test_pool, delta, config.loss_kind);
        curve.push(EpochRecord { epoch, train_loss: train.total(), test_loss });

        if !test_loss.is_finite() || !train.total().is_finite() {
            log::warn!("training diverged at epoch {epoch}; keeping last finite endowments");
            stop = StopReason::Diverged;
            w = checkpoint;
            break;
        }
        checkpoint = w.clone();

        if test_loss < best * (1.0 - config.plateau_tol) {
            best = test_loss;
            stale = 0;
        } else {
            best = best.min(test_loss);
            stale += 1;
            if stale >= config.plateau_epochs {
                stop = StopReason::Plateau;
                break;
            }
        }
    }

    let final_test_loss = eval_loss(&w, &setup, &setup.test_pool, delta, config.loss_kind);
    Ok(FitOutcome {
        delta,
        w,
        learning_curve: curve,
        final_test_loss,
        stop,
        test_count: setup.test_pool.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub delta: f64,
    pub final_test_loss: f64,
    pub epochs_run: usize,
}

/// Grid search over the depreciation factor: one fit per grid value with a
/// shared seed, selecting the smallest held-out loss.
pub struct GridSearch {
    pub chosen_delta: f64,
    pub table: Vec<GridEntry>,
    pub best: FitOutcome,
}

pub fn grid_search_delta(net: &TemporalNetwork, config: &FitConfig, threads: Threads) -> Result<GridSearch> {
    config.validate()?;
    let mut table = Vec::new();
    let mut best: Option<FitOutcome> = None;
    for &delta in &config.delta_grid {
        let outcome = fit_with_delta(net, config, delta, threads)?;
        table.push(GridEntry {
            delta,
            final_test_loss: outcome.final_test_loss,
            epochs_run: outcome.learning_curve.len(),
        });
        if best.as_ref().is_none_or(|b| outcome.final_test_loss < b.final_test_loss) {
            best = Some(outcome);
        }
    }
    let best = best.expect("nonempty grid");
    Ok(GridSearch { chosen_delta: best.delta, table, best })
}

/// Full fitting pipeline: δ grid search first, then the winning endowments.
pub fn fit(net: &TemporalNetwork, config: &FitConfig, threads: Threads) -> Result<FitOutcome> {
    Ok(grid_search_delta(net, config, threads)?.best)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimSweepEntry {
    pub dim: usize,
    pub chosen_delta: f64,
    pub final_test_loss: f64,
    pub benefit: BenefitByRange,
}

/// Repeat the fit across endowment dimensionalities and report fit quality
/// plus the benefit-by-range curves each dimension induces.
pub fn dimension_sweep(
    net: &TemporalNetwork,
    dims: &[usize],
    config: &FitConfig,
    threads: Threads,
) -> Result<Vec<DimSweepEntry>> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("dimension sweep needs at least one dimension".into()));
    }
    if dims.iter().any(|&d| !(2..=8).contains(&d)) {
        return Err(Error::InvalidArgument("sweep dimensions must lie in 2..=8".into()));
    }
    let mut out = Vec::new();
    for &dim in dims {
        let cfg = FitConfig { dim, ..config.clone() };
        let search = grid_search_delta(net, &cfg, threads)?;
        let t = if cfg.pool_phases { 1 } else { cfg.train_phase };
        let graph_prev = net.snapshot(t - 1)?.undirected_view();
        let ranges =
            crate::tie_range::tie_range_all(&graph_prev, crate::tie_range::DEFAULT_CAP, threads)?;
        let benefit =
            crate::formation::benefit_by_range(&graph_prev, &search.best.w, search.chosen_delta, &ranges);
        out.push(DimSweepEntry {
            dim,
            chosen_delta: search.chosen_delta,
            final_test_loss: search.best.final_test_loss,
            benefit,
        });
    }
    Ok(out)
}

/// Self-describing training checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: FitConfig,
    pub delta: f64,
    pub epochs_run: usize,
    pub final_test_loss: f64,
    pub stop: StopReason,
    pub node_names: Vec<String>,
    pub endowments: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn new(net: &TemporalNetwork, config: &FitConfig, outcome: &FitOutcome) -> Self {
        Self {
            config: config.clone(),
            delta: outcome.delta,
            epochs_run: outcome.learning_curve.len(),
            final_test_loss: outcome.final_test_loss,
            stop: outcome.stop,
            node_names: net.node_names().to_vec(),
            endowments: outcome.w.to_rows(),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal_graph::{ingest_events, InteractionEvent, PhaseConfig};

    fn ev(caller: &str, callee: &str, month: u32, calls: u64, dur: u64) -> InteractionEvent {
        InteractionEvent {
            caller: caller.into(),
            callee: callee.into(),
            month_index: month,
            call_count: calls,
            text_count: 0,
            call_duration_s: dur,
        }
    }

    /// Three phases over five nodes; node a keeps b and c, drops d at phase 2.
    fn fixture() -> TemporalNetwork {
        let cfg = PhaseConfig::new(1, 3).unwrap();
        let mut events = Vec::new();
        for m in 0..2u32 {
            events.push(ev("a", "b", m, 2, 120));
            events.push(ev("a", "c", m, 1, 60));
            events.push(ev("a", "d", m, 1, 30));
            events.push(ev("b", "c", m, 1, 45));
            events.push(ev("d", "e", m, 1, 15));
        }
        events.push(ev("a", "b", 2, 2, 120));
        events.push(ev("a", "c", 2, 1, 60));
        events.push(ev("b", "c", 2, 1, 45));
        events.push(ev("d", "e", 2, 1, 15));
        ingest_events(events, cfg).unwrap()
    }

    #[test]
    fn target_single_candidate_is_one() {
        let cfg = PhaseConfig::new(1, 2).unwrap();
        let net = ingest_events([ev("a", "b", 0, 1, 100), ev("a", "b", 1, 1, 50)], cfg).unwrap();
        let c = target_investment(&net, 0, 1, DurationMode::Directed).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[&1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn target_equal_durations_split_evenly() {
        let cfg = PhaseConfig::new(1, 2).unwrap();
        let net = ingest_events(
            [
                ev("a", "b", 0, 1, 10),
                ev("a", "c", 0, 1, 10),
                ev("a", "b", 1, 1, 80),
                ev("a", "c", 1, 1, 80),
            ],
            cfg,
        )
        .unwrap();
        let c = target_investment(&net, 0, 1, DurationMode::Directed).unwrap();
        assert!((c[&1] - 0.5).abs() < 1e-12);
        assert!((c[&2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn target_log_ratio_example() {
        // log1p durations in ratio 1 : 1 : 2 -> targets 0.25, 0.25, 0.5
        let d1 = (1f64.exp() - 1.0) as u64; // log1p(d1+eps) ~ 1
        let d2 = (2f64.exp() - 1.0).round() as u64;
        let cfg = PhaseConfig::new(1, 2).unwrap();
        let net = ingest_events(
            [
                ev("a", "b", 0, 1, 10),
                ev("a", "c", 0, 1, 10),
                ev("a", "d", 0, 1, 10),
                ev("a", "b", 1, 1, d1),
                ev("a", "c", 1, 1, d1),
                ev("a", "d", 1, 1, d2),
            ],
            cfg,
        )
        .unwrap();
        let c = target_investment(&net, 0, 1, DurationMode::Directed).unwrap();
        assert!((c[&1] - 0.25).abs() < 0.03);
        assert!((c[&3] - 0.5).abs() < 0.03);
        let sum: f64 = c.values().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn silent_node_is_flagged() {
        let cfg = PhaseConfig::new(1, 2).unwrap();
        // a's only candidate dissolves entirely at phase 1 (b-c keeps b alive)
        let net = ingest_events(
            [ev("a", "b", 0, 1, 10), ev("b", "c", 0, 1, 10), ev("b", "c", 1, 1, 10)],
            cfg,
        )
        .unwrap();
        assert!(matches!(
            target_investment(&net, 0, 1, DurationMode::Directed),
            Err(Error::SilentNode { node: 0, phase: 1 })
        ));
    }

    #[test]
    fn prediction_is_softmax_of_benefits() {
        let net = fixture();
        let graph_prev = net.snapshot(0).unwrap().undirected_view();
        // uniform endowments -> equal benefits -> uniform prediction
        let w = EndowmentMatrix::from_rows(vec![vec![1.0, 1.0]; 5]);
        let pred = predicted_investment(&w, 0, &graph_prev, 0.2);
        assert_eq!(pred.len(), 3);
        for &p in pred.values() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let sum: f64 = pred.values().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn prediction_two_candidate_log_ratio() {
        // benefits 0 and ln 3 -> softmax (0.25, 0.75)
        let cfg = PhaseConfig::new(1, 2).unwrap();
        let net = ingest_events(
            [ev("a", "b", 0, 1, 10), ev("a", "c", 0, 1, 10), ev("a", "b", 1, 1, 10)],
            cfg,
        )
        .unwrap();
        let graph_prev = net.snapshot(0).unwrap().undirected_view();
        let w = EndowmentMatrix::from_rows(vec![vec![0.0], vec![0.0], vec![3f64.ln()]]);
        let pred = predicted_investment(&w, 0, &graph_prev, 0.2);
        assert!((pred[&1] - 0.25).abs() < 1e-12);
        assert!((pred[&2] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn loss_zero_for_perfect_prediction_without_dissolution() {
        // single candidate, survives: target 1, prediction 1 -> L = 0
        let cfg = PhaseConfig::new(1, 2).unwrap();
        let net = ingest_events([ev("a", "b", 0, 1, 10), ev("a", "b", 1, 1, 10)], cfg).unwrap();
        let pair = build_phase_pair(&net, 1, DurationMode::Directed).unwrap();
        let w = EndowmentMatrix::zeros(2, 2);
        let all: Vec<usize> = (0..pair.problems.len()).collect();
        let l = loss(&w, &pair, 0.2, LossKind::AbsoluteDifference, &all);
        assert_eq!(l.l_pos, 0.0);
        assert_eq!(l.l_neg, 0.0);
    }

    #[test]
    fn negative_loss_is_mean_predicted_investment_on_dissolved() {
        let net = fixture();
        let pair = build_phase_pair(&net, 2, DurationMode::Directed).unwrap();
        // node a (id 0) drops d: one dissolved candidate out of three
        let idx = pair.problems.iter().position(|p| p.node == 0).unwrap();
        let w = EndowmentMatrix::from_rows(vec![vec![0.0]; 5]);
        let l = loss(&w, &pair, 0.2, LossKind::AbsoluteDifference, &[idx]);
        // uniform prediction over 3 candidates: dissolved mean = 1/3
        assert!((l.l_neg - 1.0 / 3.0).abs() < 1e-12);
        assert!(l.l_pos > 0.0);
        assert!((l.total() - (l.l_pos + l.l_neg)).abs() < 1e-15);
    }

    /// True when no ReLU argument or positive-loss residual sits within a
    /// kink neighborhood that would corrupt central differences.
    fn well_separated(w: &EndowmentMatrix, pair: &PhasePair, delta: f64, kind: LossKind) -> bool {
        let margin = 1e-3;
        for prob in &pair.problems {
            let i = prob.node;
            for (a, &j) in prob.candidates.iter().enumerate() {
                for k in 0..w.dim() {
                    if (w.row(j)[k] - w.row(i)[k]).abs() < margin {
                        return false;
                    }
                }
                for &l in pair.graph_prev.neighbors(j) {
                    for k in 0..w.dim() {
                        if (w.row(l)[k] - w.row(i)[k]).abs() < margin {
                            return false;
                        }
                    }
                }
                if kind == LossKind::AbsoluteDifference && prob.survivor[a] {
                    if let Some(target) = &prob.target {
                        let pred = predicted_investment(w, i, &pair.graph_prev, delta);
                        if (pred[&j] - target[a]).abs() < margin {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let net = fixture();
        for t in [1usize, 2] {
            let pair = build_phase_pair(&net, t, DurationMode::Directed).unwrap();
            let all: Vec<usize> = (0..pair.problems.len()).collect();
            for kind in [LossKind::AbsoluteDifference, LossKind::SquaredError] {
                // sample until clear of ReLU and absolute-value kinks
                let w = loop {
                    let cand = EndowmentMatrix::from_rows(
                        (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
                    );
                    if well_separated(&cand, &pair, 0.2, kind) {
                        break cand;
                    }
                };
                let (_, grad) = loss_gradient(&w, &pair, 0.2, kind, &all, Threads::default());
                let eps = 1e-5;
                for p in 0..15 {
                    let mut wp = w.clone();
                    wp.as_mut_slice()[p] += eps;
                    let up = loss(&wp, &pair, 0.2, kind, &all).total();
                    let mut wm = w.clone();
                    wm.as_mut_slice()[p] -= eps;
                    let down = loss(&wm, &pair, 0.2, kind, &all).total();
                    let fd = (up - down) / (2.0 * eps);
                    let denom = fd.abs().max(grad[p].abs()).max(1e-8);
                    assert!(
                        ((fd - grad[p]) / denom).abs() < 1e-4,
                        "t={t} {kind:?} param {p}: fd {fd} vs analytic {}",
                        grad[p]
                    );
                }
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_endowments() {
        let net = fixture();
        let config = FitConfig {
            dim: 2,
            delta_grid: vec![0.2],
            max_epochs: 5,
            nodes_per_epoch: 4,
            test_nodes: 1,
            learning_rate: 0.0,
            weight_decay: 0.0,
            seed: 9,
            train_phase: 1,
            ..Default::default()
        };
        let outcome = fit_with_delta(&net, &config, 0.2, Threads::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let init = EndowmentMatrix::gaussian(net.num_nodes(), 2, config.init_sd, &mut rng);
        assert_eq!(outcome.w, init);
        let first = outcome.learning_curve.first().unwrap().test_loss;
        assert!(outcome.learning_curve.iter().all(|r| (r.test_loss - first).abs() < 1e-15));
    }

    #[test]
    fn fit_is_deterministic() {
        let net = fixture();
        let config = FitConfig {
            dim: 2,
            delta_grid: vec![0.2],
            max_epochs: 15,
            nodes_per_epoch: 4,
            test_nodes: 1,
            seed: 123,
            train_phase: 1,
            ..Default::default()
        };
        let a = fit_with_delta(&net, &config, 0.2, Threads::default()).unwrap();
        let b = fit_with_delta(&net, &config, 0.2, Threads::default()).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.learning_curve, b.learning_curve);
    }

    #[test]
    fn single_element_grid_selects_it() {
        let net = fixture();
        let config = FitConfig {
            dim: 2,
            delta_grid: vec![0.3],
            max_epochs: 8,
            nodes_per_epoch: 4,
            test_nodes: 1,
            seed: 5,
            train_phase: 1,
            ..Default::default()
        };
        let search = grid_search_delta(&net, &config, Threads::default()).unwrap();
        assert_eq!(search.chosen_delta, 0.3);
        assert_eq!(search.table.len(), 1);
    }

    #[test]
    fn dimension_sweep_validates_input() {
        let net = fixture();
        let config = FitConfig {
            delta_grid: vec![0.2],
            max_epochs: 3,
            nodes_per_epoch: 4,
            test_nodes: 1,
            train_phase: 1,
            ..Default::default()
        };
        assert!(dimension_sweep(&net, &[], &config, Threads::default()).is_err());
        assert!(dimension_sweep(&net, &[9], &config, Threads::default()).is_err());
        let entries = dimension_sweep(&net, &[2, 3], &config, Threads::default()).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].dim, 2);
    }

    #[test]
    fn checkpoint_round_trips() {
        let net = fixture();
        let config = FitConfig {
            dim: 2,
            delta_grid: vec![0.2],
            max_epochs: 3,
            nodes_per_epoch: 4,
            test_nodes: 1,
            train_phase: 1,
            ..Default::default()
        };
        let outcome = fit_with_delta(&net, &config, 0.2, Threads::default()).unwrap();
        let ckpt = Checkpoint::new(&net, &config, &outcome);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.endowments, outcome.w.to_rows());
        assert_eq!(back.node_names, net.node_names());
    }
}
