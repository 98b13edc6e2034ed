//! Longitudinal tie analytics over a temporal network.
//!
//! Everything here is a pure read of immutable snapshots. Ties are tracked
//! as per-pair trajectories of symmetric frequency/duration; a tie is
//! *present* in a phase iff its symmetric frequency is positive, *new* at a
//! phase iff it was absent in the immediately preceding one. Strength means
//! use log1p so dissolved ties (value 0) stay representable, and all means
//! accumulate with compensated summation so the persistence/increment
//! decomposition identity holds to ~1e-12.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::temporal_graph::TemporalNetwork;
use crate::tie_range::{tie_range_all, TieRange};
use crate::util::{mean_ci, KahanSum, MeanCi};
use crate::Threads;

/// Which edge weight a statistic reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Frequency,
    Duration,
}

/// Scale applied to the metric before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricTransform {
    Raw,
    Log1p,
}

impl MetricTransform {
    fn apply(&self, x: f64) -> f64 {
        match self {
            MetricTransform::Raw => x,
            MetricTransform::Log1p => x.ln_1p(),
        }
    }
}

/// Whether per-phase strength means include ties that dissolved (as zeros)
/// or condition on survival into that phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SeriesConditioning {
    /// Dissolved ties contribute log1p(0) = 0; the mean mirrors the
    /// unconditional expectation on the left side of the decomposition.
    #[default]
    IncludeDissolved,
    SurvivorsOnly,
}

/// Per-pair history of symmetric weights across all phases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieTrajectory {
    /// `(u, v)` with `u < v`.
    pub pair: (NodeId, NodeId),
    pub freq: Vec<u64>,
    pub dur: Vec<u64>,
}

impl TieTrajectory {
    pub fn present(&self, t: usize) -> bool {
        self.freq[t] > 0
    }

    pub fn value(&self, t: usize, metric: Metric) -> f64 {
        match metric {
            Metric::Frequency => self.freq[t] as f64,
            Metric::Duration => self.dur[t] as f64,
        }
    }

    /// A tie is new at `t` if present at `t` with no interaction at `t - 1`.
    pub fn is_new_at(&self, t: usize) -> bool {
        t >= 1 && self.present(t) && !self.present(t - 1)
    }

    /// Number of phases with any interaction.
    pub fn lifespan(&self) -> u32 {
        self.freq.iter().filter(|&&f| f > 0).count() as u32
    }
}

/// All tie trajectories of the network, ordered by pair.
pub fn trajectories(net: &TemporalNetwork) -> Vec<TieTrajectory> {
    let num_phases = net.num_phases();
    let mut map: BTreeMap<(NodeId, NodeId), TieTrajectory> = BTreeMap::new();
    for (t, snap) in net.snapshots().iter().enumerate() {
        for ((u, v), (f, d)) in snap.symmetric_weights() {
            let traj = map.entry((u, v)).or_insert_with(|| TieTrajectory {
                pair: (u, v),
                freq: vec![0; num_phases],
                dur: vec![0; num_phases],
            });
            traj.freq[t] = f;
            traj.dur[t] = d;
        }
    }
    map.into_values().collect()
}

/// Tie ranges of every phase's undirected snapshot.
pub fn tie_ranges_per_phase(
    net: &TemporalNetwork,
    cap: u32,
    threads: Threads,
) -> Result<Vec<BTreeMap<(NodeId, NodeId), TieRange>>> {
    net.snapshots()
        .iter()
        .map(|s| tie_range_all(&s.undirected_view(), cap, threads))
        .collect()
}

/// Per tie-range class, per phase: mean log1p strength with 95% CI.
/// Classes come from the tie range at `baseline_phase`; ties absent at the
/// baseline do not enter. Empty cells are `None`, never NaN.
pub type StrengthSeries = BTreeMap<TieRange, Vec<Option<MeanCi>>>;

pub fn strength_series(
    net: &TemporalNetwork,
    baseline_phase: usize,
    metric: Metric,
    conditioning: SeriesConditioning,
    cap: u32,
    threads: Threads,
) -> Result<StrengthSeries> {
    let snap = net.snapshot(baseline_phase)?;
    let ranges = tie_range_all(&snap.undirected_view(), cap, threads)?;
    let trajs = trajectories(net);
    Ok(strength_series_from(&trajs, &ranges, net.num_phases(), metric, conditioning))
}

/// Core of [`strength_series`] over prebuilt trajectories and baseline ranges.
pub fn strength_series_from(
    trajs: &[TieTrajectory],
    baseline_ranges: &BTreeMap<(NodeId, NodeId), TieRange>,
    num_phases: usize,
    metric: Metric,
    conditioning: SeriesConditioning,
) -> StrengthSeries {
    let mut groups: BTreeMap<TieRange, Vec<&TieTrajectory>> = BTreeMap::new();
    for traj in trajs {
        if let Some(&r) = baseline_ranges.get(&traj.pair) {
            groups.entry(r).or_default().push(traj);
        }
    }
    groups
        .into_iter()
        .map(|(r, members)| {
            let series = (0..num_phases)
                .map(|t| {
                    let values = members.iter().filter_map(|traj| match conditioning {
                        SeriesConditioning::IncludeDissolved => Some(traj.value(t, metric).ln_1p()),
                        SeriesConditioning::SurvivorsOnly => {
                            traj.present(t).then(|| traj.value(t, metric).ln_1p())
                        }
                    });
                    mean_ci(values)
                })
                .collect();
            (r, series)
        })
        .collect()
}

/// The persistence/increment decomposition of mean strength between a
/// baseline phase and a later phase `t`:
///
/// E[y_t | y_b > 0] = (E[y_b | both > 0] + E[y_t - y_b | both > 0]) * P[y_t > 0 | y_b > 0]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Ties with positive strength at the baseline (the conditioning set).
    pub n_baseline: u64,
    /// Of those, ties still positive at `t`.
    pub n_both: u64,
    pub persistence: f64,
    pub mean_baseline_given_both: Option<f64>,
    pub increment_given_both: Option<f64>,
}

impl Decomposition {
    /// Right-hand side of the identity; 0 when no tie survived.
    pub fn rhs(&self) -> f64 {
        match (self.mean_baseline_given_both, self.increment_given_both) {
            (Some(base), Some(inc)) => (base + inc) * self.persistence,
            _ => 0.0,
        }
    }
}

pub fn decompose(net: &TemporalNetwork, baseline_phase: usize, t: usize, metric: Metric) -> Result<Decomposition> {
    if t <= baseline_phase {
        return Err(Error::InvalidArgument(format!(
            "decomposition needs t > baseline, got baseline {baseline_phase}, t {t}"
        )));
    }
    if t >= net.num_phases() {
        return Err(Error::PhaseOutOfRange { phase: t, num_phases: net.num_phases() });
    }
    let trajs = trajectories(net);
    decompose_from(trajs.iter(), baseline_phase, t, metric, MetricTransform::Raw)
}

/// Decomposition over an explicit trajectory subset, on a chosen scale.
pub fn decompose_from<'a>(
    trajs: impl Iterator<Item = &'a TieTrajectory>,
    baseline_phase: usize,
    t: usize,
    metric: Metric,
    transform: MetricTransform,
) -> Result<Decomposition> {
    let mut n_baseline = 0u64;
    let mut n_both = 0u64;
    let mut sum_base = KahanSum::new();
    let mut sum_inc = KahanSum::new();
    for traj in trajs {
        if !traj.present(baseline_phase) {
            continue;
        }
        n_baseline += 1;
        if traj.present(t) {
            n_both += 1;
            let y_base = transform.apply(traj.value(baseline_phase, metric));
            let y_t = transform.apply(traj.value(t, metric));
            sum_base.add(y_base);
            sum_inc.add(y_t - y_base);
        }
    }
    if n_baseline == 0 {
        return Err(Error::EmptyBaseline(baseline_phase));
    }
    let persistence = n_both as f64 / n_baseline as f64;
    let (mean_base, mean_inc) = if n_both > 0 {
        (Some(sum_base.value() / n_both as f64), Some(sum_inc.value() / n_both as f64))
    } else {
        (None, None)
    };
    Ok(Decomposition {
        n_baseline,
        n_both,
        persistence,
        mean_baseline_given_both: mean_base,
        increment_given_both: mean_inc,
    })
}

/// Row-stochastic tie-range transition matrix between two phases,
/// conditioned on ties present in both with finite (or merged-top) range in
/// both; infinite-range and dissolved ties are excluded. Axes follow
/// [`TieRange::FINITE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub phase_a: usize,
    pub phase_b: usize,
    pub counts: [[u64; 5]; 5],
    pub probs: [[f64; 5]; 5],
    pub row_totals: [u64; 5],
}

pub fn transition_matrix(
    net: &TemporalNetwork,
    phase_a: usize,
    phase_b: usize,
    cap: u32,
    threads: Threads,
) -> Result<TransitionMatrix> {
    if phase_a >= phase_b {
        return Err(Error::InvalidArgument(format!(
            "transition needs phase_a < phase_b, got {phase_a} and {phase_b}"
        )));
    }
    let ranges_a = tie_range_all(&net.snapshot(phase_a)?.undirected_view(), cap, threads)?;
    let ranges_b = tie_range_all(&net.snapshot(phase_b)?.undirected_view(), cap, threads)?;
    Ok(transition_from_ranges(phase_a, phase_b, &ranges_a, &ranges_b))
}

pub fn transition_from_ranges(
    phase_a: usize,
    phase_b: usize,
    ranges_a: &BTreeMap<(NodeId, NodeId), TieRange>,
    ranges_b: &BTreeMap<(NodeId, NodeId), TieRange>,
) -> TransitionMatrix {
    let mut counts = [[0u64; 5]; 5];
    for (pair, ra) in ranges_a {
        let (Some(i), Some(j)) = (
            ra.finite_index(),
            ranges_b.get(pair).and_then(|rb| rb.finite_index()),
        ) else {
            continue;
        };
        counts[i][j] += 1;
    }
    let mut probs = [[0.0; 5]; 5];
    let mut row_totals = [0u64; 5];
    for i in 0..5 {
        let total: u64 = counts[i].iter().sum();
        row_totals[i] = total;
        if total > 0 {
            for j in 0..5 {
                probs[i][j] = counts[i][j] as f64 / total as f64;
            }
        }
    }
    TransitionMatrix { phase_a, phase_b, counts, probs, row_totals }
}

/// One cell of the joint range-strength evolution: ties whose range moved
/// `from -> to` between `t` and `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointCell {
    pub count: u64,
    pub mean_log_dur_next: f64,
    pub mean_log_freq_next: f64,
    /// P[present at t+2 | cell]; `None` when `t + 2` is out of range.
    pub persistence_next: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEvolution {
    pub t: usize,
    /// Keyed by (range at t, range at t+1); zero-support cells are absent.
    pub cells: BTreeMap<(TieRange, TieRange), JointCell>,
}

pub fn joint_evolution(net: &TemporalNetwork, t: usize, cap: u32, threads: Threads) -> Result<JointEvolution> {
    if t + 1 >= net.num_phases() {
        return Err(Error::PhaseOutOfRange { phase: t + 1, num_phases: net.num_phases() });
    }
    let has_t2 = t + 2 < net.num_phases();
    let ranges_a = tie_range_all(&net.snapshot(t)?.undirected_view(), cap, threads)?;
    let ranges_b = tie_range_all(&net.snapshot(t + 1)?.undirected_view(), cap, threads)?;
    let trajs = trajectories(net);

    struct Acc {
        count: u64,
        dur: KahanSum,
        freq: KahanSum,
        survived: u64,
    }
    let mut cells: BTreeMap<(TieRange, TieRange), Acc> = BTreeMap::new();
    for traj in &trajs {
        let (Some(&ra), Some(&rb)) = (ranges_a.get(&traj.pair), ranges_b.get(&traj.pair)) else {
            continue;
        };
        if ra.finite_index().is_none() || rb.finite_index().is_none() {
            continue;
        }
        let acc = cells.entry((ra, rb)).or_insert(Acc {
            count: 0,
            dur: KahanSum::new(),
            freq: KahanSum::new(),
            survived: 0,
        });
        acc.count += 1;
        acc.dur.add(traj.value(t + 1, Metric::Duration).ln_1p());
        acc.freq.add(traj.value(t + 1, Metric::Frequency).ln_1p());
        if has_t2 && traj.present(t + 2) {
            acc.survived += 1;
        }
    }
    let cells = cells
        .into_iter()
        .map(|(key, acc)| {
            let n = acc.count as f64;
            (
                key,
                JointCell {
                    count: acc.count,
                    mean_log_dur_next: acc.dur.value() / n,
                    mean_log_freq_next: acc.freq.value() / n,
                    persistence_next: has_t2.then(|| acc.survived as f64 / n),
                },
            )
        })
        .collect();
    Ok(JointEvolution { t, cells })
}

/// Lifespan (number of phases with any interaction) per pair ever present.
pub fn lifespan(net: &TemporalNetwork) -> BTreeMap<(NodeId, NodeId), u32> {
    trajectories(net)
        .into_iter()
        .filter(|traj| traj.lifespan() > 0)
        .map(|traj| (traj.pair, traj.lifespan()))
        .collect()
}

/// Mean lifespan per tie-range class at a reference phase.
pub fn lifespan_by_class(
    net: &TemporalNetwork,
    reference_phase: usize,
    cap: u32,
    threads: Threads,
) -> Result<BTreeMap<TieRange, MeanCi>> {
    let ranges = tie_range_all(&net.snapshot(reference_phase)?.undirected_view(), cap, threads)?;
    let trajs = trajectories(net);
    let mut groups: BTreeMap<TieRange, Vec<f64>> = BTreeMap::new();
    for traj in &trajs {
        if let Some(&r) = ranges.get(&traj.pair) {
            groups.entry(r).or_default().push(traj.lifespan() as f64);
        }
    }
    Ok(groups
        .into_iter()
        .filter_map(|(r, vals)| mean_ci(vals.iter().copied()).map(|ci| (r, ci)))
        .collect())
}

/// Long-tie likelihood for one node degree: of `ties` incident to nodes of
/// that degree, `long_finite` have range 5 or the merged top class.
/// Infinite-range ties stay in the denominator but are reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongTieRate {
    pub ties: u64,
    pub long_finite: u64,
    pub infinite: u64,
}

impl LongTieRate {
    pub fn rate(&self) -> f64 {
        if self.ties == 0 {
            0.0
        } else {
            self.long_finite as f64 / self.ties as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeAnalysis {
    pub phase: usize,
    pub median_degree: usize,
    /// Ties are counted once per endpoint degree, so a tie contributes to
    /// two (possibly equal) degree buckets.
    pub long_tie_rate_by_degree: BTreeMap<usize, LongTieRate>,
    /// Strength series within the subgroup of ties touching a node of
    /// degree <= median / > median; a mixed tie appears in both.
    pub low_group: StrengthSeries,
    pub high_group: StrengthSeries,
}

pub fn degree_analysis(
    net: &TemporalNetwork,
    phase: usize,
    metric: Metric,
    conditioning: SeriesConditioning,
    cap: u32,
    threads: Threads,
) -> Result<DegreeAnalysis> {
    let g = net.snapshot(phase)?.undirected_view();
    let ranges = tie_range_all(&g, cap, threads)?;
    let trajs = trajectories(net);

    let degrees: Vec<usize> = (0..g.num_nodes() as NodeId).map(|u| g.degree(u)).collect();
    let mut sorted = degrees.clone();
    sorted.sort_unstable();
    let median_degree = if sorted.is_empty() { 0 } else { sorted[sorted.len() / 2] };

    let mut by_degree: BTreeMap<usize, LongTieRate> = BTreeMap::new();
    for ((u, v), r) in &ranges {
        for node in [u, v] {
            let entry = by_degree
                .entry(degrees[*node as usize])
                .or_insert(LongTieRate { ties: 0, long_finite: 0, infinite: 0 });
            entry.ties += 1;
            match r {
                TieRange::Five | TieRange::SixPlus => entry.long_finite += 1,
                TieRange::Infinite => entry.infinite += 1,
                _ => {}
            }
        }
    }

    let in_group = |pair: &(NodeId, NodeId), low: bool| {
        let (du, dv) = (degrees[pair.0 as usize], degrees[pair.1 as usize]);
        if low {
            du <= median_degree || dv <= median_degree
        } else {
            du > median_degree || dv > median_degree
        }
    };
    let split = |low: bool| {
        let subset: Vec<TieTrajectory> = trajs
            .iter()
            .filter(|traj| ranges.contains_key(&traj.pair) && in_group(&traj.pair, low))
            .cloned()
            .collect();
        strength_series_from(&subset, &ranges, net.num_phases(), metric, conditioning)
    };

    Ok(DegreeAnalysis {
        phase,
        median_degree,
        long_tie_rate_by_degree: by_degree,
        low_group: split(true),
        high_group: split(false),
    })
}

/// Strength and decomposition series for one tie cohort, classed by tie
/// range at the reference phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortProfile {
    pub tie_count: u64,
    pub strength: StrengthSeries,
    /// Per class, per phase `t > reference`: the decomposition with the
    /// reference phase as baseline. `None` where the class has no ties.
    pub decomposition: BTreeMap<TieRange, Vec<Option<Decomposition>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewExistingProfiles {
    pub reference_phase: usize,
    pub new_ties: CohortProfile,
    pub existing_ties: CohortProfile,
}

/// Split ties present at `reference_phase` into new (no interaction in the
/// phase before) and existing, then profile each cohort exactly like the
/// baseline strength/decomposition analyses.
pub fn new_existing_profiles(
    net: &TemporalNetwork,
    reference_phase: usize,
    metric: Metric,
    conditioning: SeriesConditioning,
    cap: u32,
    threads: Threads,
) -> Result<NewExistingProfiles> {
    if reference_phase < 1 {
        return Err(Error::InvalidArgument(
            "new/existing split needs a preceding phase; reference must be >= 1".into(),
        ));
    }
    let ranges = tie_range_all(&net.snapshot(reference_phase)?.undirected_view(), cap, threads)?;
    let trajs = trajectories(net);
    let num_phases = net.num_phases();

    let profile = |new: bool| -> CohortProfile {
        let cohort: Vec<TieTrajectory> = trajs
            .iter()
            .filter(|traj| traj.present(reference_phase) && traj.is_new_at(reference_phase) == new)
            .cloned()
            .collect();
        let strength = strength_series_from(&cohort, &ranges, net.num_phases(), metric, conditioning);
        let mut by_class: BTreeMap<TieRange, Vec<&TieTrajectory>> = BTreeMap::new();
        for traj in &cohort {
            if let Some(&r) = ranges.get(&traj.pair) {
                by_class.entry(r).or_default().push(traj);
            }
        }
        let mut decomposition = BTreeMap::new();
        for (r, members) in by_class {
            let series: Vec<Option<Decomposition>> = (reference_phase + 1..num_phases)
                .map(|t| {
                    decompose_from(members.iter().copied(), reference_phase, t, metric, MetricTransform::Raw).ok()
                })
                .collect();
            decomposition.insert(r, series);
        }
        CohortProfile { tie_count: cohort.len() as u64, strength, decomposition }
    };

    Ok(NewExistingProfiles {
        reference_phase,
        new_ties: profile(true),
        existing_ties: profile(false),
    })
}
