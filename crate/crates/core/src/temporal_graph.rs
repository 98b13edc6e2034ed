//! Interaction-log ingestion and phase snapshots.
//!
//! Monthly directed interaction records are aggregated into fixed-length
//! phases (default: three months). Each phase holds directed frequency
//! (calls + texts) and duration (call seconds) weights; structural analyses
//! run on the symmetrized [`UndirectedGraph`] view. The active-node filter
//! keeps only users with at least one interaction in every phase, iterated
//! to a fixpoint by default so the surviving node universe is self-consistent.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, UndirectedGraph};

/// One monthly aggregated directed interaction record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub caller: String,
    pub callee: String,
    /// 0-based month within the observation window.
    pub month_index: u32,
    /// Calls with zero-second duration are excluded upstream.
    pub call_count: u64,
    pub text_count: u64,
    pub call_duration_s: u64,
}

/// Time-window layout of the observation period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub window_months: u32,
    pub total_months: u32,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        // a season per phase, eight phases over two years
        Self { window_months: 3, total_months: 24 }
    }
}

impl PhaseConfig {
    pub fn new(window_months: u32, total_months: u32) -> Result<Self> {
        if window_months == 0 || total_months == 0 {
            return Err(Error::InvalidConfig("window and total months must be positive".into()));
        }
        if total_months % window_months != 0 {
            return Err(Error::InvalidConfig(format!(
                "total_months {total_months} not divisible by window_months {window_months}"
            )));
        }
        Ok(Self { window_months, total_months })
    }

    pub fn num_phases(&self) -> usize {
        (self.total_months / self.window_months) as usize
    }
}

/// Directed weighted graph for one phase.
///
/// Weights are keyed by ordered `(src, dst)` pairs; an entry exists iff its
/// frequency is positive. The undirected edge {i, j} exists iff
/// F_ij + F_ji > 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSnapshot {
    pub phase: usize,
    num_nodes: usize,
    /// (frequency, duration) per directed pair.
    weights: BTreeMap<(NodeId, NodeId), (u64, u64)>,
}

impl PhaseSnapshot {
    pub fn new(phase: usize, num_nodes: usize) -> Self {
        Self { phase, num_nodes, weights: BTreeMap::new() }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn add(&mut self, src: NodeId, dst: NodeId, freq: u64, dur: u64) {
        if freq == 0 && dur == 0 {
            return;
        }
        let w = self.weights.entry((src, dst)).or_insert((0, 0));
        w.0 += freq;
        w.1 += dur;
    }

    /// Directed frequency F_ij.
    pub fn freq(&self, src: NodeId, dst: NodeId) -> u64 {
        self.weights.get(&(src, dst)).map_or(0, |w| w.0)
    }

    /// Directed duration D_ij in seconds.
    pub fn dur(&self, src: NodeId, dst: NodeId) -> u64 {
        self.weights.get(&(src, dst)).map_or(0, |w| w.1)
    }

    /// Directed entries `((src, dst), (freq, dur))` in key order.
    pub fn directed_weights(&self) -> impl Iterator<Item = ((NodeId, NodeId), (u64, u64))> + '_ {
        self.weights.iter().map(|(&k, &v)| (k, v))
    }

    pub fn num_directed_entries(&self) -> usize {
        self.weights.len()
    }

    /// Symmetrized weights F̃ = F_ij + F_ji, D̃ = D_ij + D_ji keyed `(u, v)`,
    /// `u < v`.
    pub fn symmetric_weights(&self) -> BTreeMap<(NodeId, NodeId), (u64, u64)> {
        let mut sym: BTreeMap<(NodeId, NodeId), (u64, u64)> = BTreeMap::new();
        for (&(a, b), &(f, d)) in &self.weights {
            let key = if a < b { (a, b) } else { (b, a) };
            let w = sym.entry(key).or_insert((0, 0));
            w.0 += f;
            w.1 += d;
        }
        sym.retain(|_, w| w.0 > 0);
        sym
    }

    /// The undirected structural view of this phase.
    pub fn undirected_view(&self) -> UndirectedGraph {
        UndirectedGraph::from_weights(self.num_nodes, &self.symmetric_weights())
    }
}

/// Ordered, contiguous phase snapshots over a shared node universe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalNetwork {
    config: PhaseConfig,
    names: Vec<String>,
    snapshots: Vec<PhaseSnapshot>,
}

impl TemporalNetwork {
    pub fn config(&self) -> PhaseConfig {
        self.config
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn num_phases(&self) -> usize {
        self.snapshots.len()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.names[id as usize]
    }

    pub fn node_names(&self) -> &[String] {
        &self.names
    }

    pub fn snapshot(&self, phase: usize) -> Result<&PhaseSnapshot> {
        self.snapshots
            .get(phase)
            .ok_or(Error::PhaseOutOfRange { phase, num_phases: self.snapshots.len() })
    }

    pub fn snapshots(&self) -> &[PhaseSnapshot] {
        &self.snapshots
    }

    /// Assemble a network directly from per-phase snapshots (used by the
    /// simulator, which owns its node universe).
    pub fn from_parts(config: PhaseConfig, names: Vec<String>, snapshots: Vec<PhaseSnapshot>) -> Self {
        debug_assert!(snapshots.iter().enumerate().all(|(t, s)| s.phase == t));
        Self { config, names, snapshots }
    }
}

/// How many passes the active-node filter makes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FilterMode {
    /// Re-apply until no further node drops out. Removing a node deletes its
    /// edges, which can silence a neighbor; iterating yields a node universe
    /// in which the activity invariant actually holds.
    #[default]
    Fixpoint,
    SinglePass,
}

/// Aggregate an event stream into per-phase directed snapshots.
///
/// Rejects self-loops, months outside the window, and physically impossible
/// rows (positive call duration with zero calls) with a row-level diagnostic.
/// Node ids are interned in first-appearance order.
pub fn ingest_events<I>(events: I, config: PhaseConfig) -> Result<TemporalNetwork>
where
    I: IntoIterator<Item = InteractionEvent>,
{
    let num_phases = config.num_phases();
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut phases: Vec<BTreeMap<(NodeId, NodeId), (u64, u64)>> = vec![BTreeMap::new(); num_phases];

    let intern = |name: &str, names: &mut Vec<String>, index: &mut HashMap<String, NodeId>| {
        if let Some(&id) = index.get(name) {
            id
        } else {
            let id = names.len() as NodeId;
            names.push(name.to_string());
            index.insert(name.to_string(), id);
            id
        }
    };

    for (row, ev) in events.into_iter().enumerate() {
        let line = row as u64 + 2; // 1-based, after the header
        if ev.caller == ev.callee {
            return Err(Error::MalformedRecord { line, reason: format!("self-loop on {}", ev.caller) });
        }
        if ev.month_index >= config.total_months {
            return Err(Error::MonthOutOfRange { month: ev.month_index, total_months: config.total_months });
        }
        if ev.call_duration_s > 0 && ev.call_count == 0 {
            return Err(Error::MalformedRecord {
                line,
                reason: "positive call duration with zero calls".into(),
            });
        }
        let src = intern(&ev.caller, &mut names, &mut index);
        let dst = intern(&ev.callee, &mut names, &mut index);
        let phase = (ev.month_index / config.window_months) as usize;
        let freq = ev.call_count + ev.text_count;
        if freq == 0 && ev.call_duration_s == 0 {
            continue;
        }
        let w = phases[phase].entry((src, dst)).or_insert((0, 0));
        w.0 += freq;
        w.1 += ev.call_duration_s;
    }

    let num_nodes = names.len();
    let snapshots = phases
        .into_iter()
        .enumerate()
        .map(|(t, weights)| PhaseSnapshot { phase: t, num_nodes, weights })
        .collect();
    Ok(TemporalNetwork { config, names, snapshots })
}

/// Read events from CSV with header `caller,callee,month,calls,texts,duration_s`.
pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<InteractionEvent>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<CsvEvent>().enumerate() {
        let line = row as u64 + 2;
        let rec = rec.map_err(|e| Error::MalformedRecord { line, reason: e.to_string() })?;
        // serde rejects negative values for the unsigned fields, which covers
        // the "negative counts" malformed case with the same row diagnostic.
        out.push(InteractionEvent {
            caller: rec.caller,
            callee: rec.callee,
            month_index: rec.month,
            call_count: rec.calls,
            text_count: rec.texts,
            call_duration_s: rec.duration_s,
        });
    }
    Ok(out)
}

pub fn read_events_csv_path(path: &Path) -> Result<Vec<InteractionEvent>> {
    read_events_csv(std::fs::File::open(path)?)
}

/// Write events in the same schema `ingest_events` consumes.
pub fn write_events_csv<W: std::io::Write>(writer: W, events: &[InteractionEvent]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["caller", "callee", "month", "calls", "texts", "duration_s"])?;
    for ev in events {
        wtr.write_record([
            ev.caller.as_str(),
            ev.callee.as_str(),
            &ev.month_index.to_string(),
            &ev.call_count.to_string(),
            &ev.text_count.to_string(),
            &ev.call_duration_s.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CsvEvent {
    caller: String,
    callee: String,
    month: u32,
    calls: u64,
    texts: u64,
    duration_s: u64,
}

/// Keep only nodes with at least one incident interaction (in or out) in
/// every phase; drop all edges touching removed nodes. Node ids are
/// compacted, preserving relative order of the survivors.
pub fn filter_active_nodes(net: &TemporalNetwork, mode: FilterMode) -> TemporalNetwork {
    let mut alive: Vec<bool> = vec![true; net.num_nodes()];
    loop {
        let mut changed = false;
        // active in a phase = has an entry with a surviving peer
        let mut active = vec![vec![false; net.num_nodes()]; net.num_phases()];
        for (t, snap) in net.snapshots.iter().enumerate() {
            for (&(a, b), _) in &snap.weights {
                if alive[a as usize] && alive[b as usize] {
                    active[t][a as usize] = true;
                    active[t][b as usize] = true;
                }
            }
        }
        for id in 0..net.num_nodes() {
            if alive[id] && !(0..net.num_phases()).all(|t| active[t][id]) {
                alive[id] = false;
                changed = true;
            }
        }
        if !changed || mode == FilterMode::SinglePass {
            break;
        }
    }

    let mut remap: Vec<Option<NodeId>> = vec![None; net.num_nodes()];
    let mut names = Vec::new();
    for (old, name) in net.names.iter().enumerate() {
        if alive[old] {
            remap[old] = Some(names.len() as NodeId);
            names.push(name.clone());
        }
    }
    let num_nodes = names.len();
    let snapshots = net
        .snapshots
        .iter()
        .map(|snap| {
            let mut weights = BTreeMap::new();
            for (&(a, b), &w) in &snap.weights {
                if let (Some(na), Some(nb)) = (remap[a as usize], remap[b as usize]) {
                    weights.insert((na, nb), w);
                }
            }
            PhaseSnapshot { phase: snap.phase, num_nodes, weights }
        })
        .collect();
    TemporalNetwork { config: net.config, names, snapshots }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(caller: &str, callee: &str, month: u32, calls: u64, texts: u64, dur: u64) -> InteractionEvent {
        InteractionEvent {
            caller: caller.into(),
            callee: callee.into(),
            month_index: month,
            call_count: calls,
            text_count: texts,
            call_duration_s: dur,
        }
    }

    #[test]
    fn single_event_aggregates() {
        let net = ingest_events([ev("a", "b", 0, 2, 1, 300)], PhaseConfig::default()).unwrap();
        assert_eq!(net.num_phases(), 8);
        let s = net.snapshot(0).unwrap();
        assert_eq!(s.freq(0, 1), 3);
        assert_eq!(s.dur(0, 1), 300);
        assert_eq!(s.freq(1, 0), 0);
    }

    #[test]
    fn months_0_to_23_make_eight_phases() {
        let events: Vec<_> = (0..24).map(|m| ev("a", "b", m, 1, 0, 60)).collect();
        let net = ingest_events(events, PhaseConfig::default()).unwrap();
        assert_eq!(net.num_phases(), 8);
        for t in 0..8 {
            assert_eq!(net.snapshot(t).unwrap().freq(0, 1), 3);
            assert_eq!(net.snapshot(t).unwrap().dur(0, 1), 180);
        }
    }

    #[test]
    fn empty_stream_yields_empty_snapshots() {
        let net = ingest_events(std::iter::empty(), PhaseConfig::default()).unwrap();
        assert_eq!(net.num_phases(), 8);
        assert_eq!(net.num_nodes(), 0);
        assert!(net.snapshots().iter().all(|s| s.num_directed_entries() == 0));
    }

    #[test]
    fn self_loop_rejected_with_line() {
        let err = ingest_events([ev("a", "a", 0, 1, 0, 10)], PhaseConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 2, .. }));
    }

    #[test]
    fn month_out_of_range_rejected() {
        let err = ingest_events([ev("a", "b", 24, 1, 0, 10)], PhaseConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MonthOutOfRange { month: 24, .. }));
    }

    #[test]
    fn duration_without_calls_rejected() {
        let err = ingest_events([ev("a", "b", 0, 0, 2, 45)], PhaseConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { .. }));
    }

    #[test]
    fn config_divisibility_enforced() {
        assert!(PhaseConfig::new(5, 24).is_err());
        assert_eq!(PhaseConfig::new(6, 24).unwrap().num_phases(), 4);
        assert_eq!(PhaseConfig::new(1, 24).unwrap().num_phases(), 24);
    }

    #[test]
    fn undirected_view_merges_directions() {
        let cfg = PhaseConfig::new(1, 1).unwrap();
        let net = ingest_events(
            [ev("a", "b", 0, 2, 0, 100), ev("b", "a", 0, 0, 3, 0), ev("c", "a", 0, 1, 0, 7)],
            cfg,
        )
        .unwrap();
        let g = net.snapshot(0).unwrap().undirected_view();
        assert_eq!(g.edge_freq(0, 1), Some(5));
        assert_eq!(g.edge_dur(0, 1), Some(100));
        assert_eq!(g.edge_freq(0, 2), Some(1));
    }

    #[test]
    fn one_sided_edge_still_present() {
        let cfg = PhaseConfig::new(1, 1).unwrap();
        let net = ingest_events([ev("a", "b", 0, 2, 0, 10)], cfg).unwrap();
        let g = net.snapshot(0).unwrap().undirected_view();
        assert!(g.has_edge(0, 1));
        assert_eq!(g.edge_freq(1, 0), Some(2));
    }

    #[test]
    fn filter_drops_node_silent_in_one_phase() {
        let cfg = PhaseConfig::new(1, 2).unwrap();
        // c talks only in month 0; a and b talk in both months
        let net = ingest_events(
            [
                ev("a", "b", 0, 1, 0, 5),
                ev("a", "b", 1, 1, 0, 5),
                ev("c", "a", 0, 1, 0, 5),
            ],
            cfg,
        )
        .unwrap();
        let filtered = filter_active_nodes(&net, FilterMode::Fixpoint);
        assert_eq!(filtered.num_nodes(), 2);
        assert_eq!(filtered.node_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(filtered.snapshot(0).unwrap().freq(0, 1), 1);
    }

    #[test]
    fn filter_fixpoint_cascades() {
        let cfg = PhaseConfig::new(1, 2).unwrap();
        // d only ever talks to c; c is silent in month 1, so dropping c
        // silences d in month 0 as well.
        let net = ingest_events(
            [
                ev("a", "b", 0, 1, 0, 5),
                ev("a", "b", 1, 1, 0, 5),
                ev("c", "d", 0, 1, 0, 5),
                ev("d", "a", 1, 1, 0, 5),
            ],
            cfg,
        )
        .unwrap();
        let single = filter_active_nodes(&net, FilterMode::SinglePass);
        // one pass removes only c (d still looked active in both months)
        assert_eq!(single.num_nodes(), 3);
        let fixed = filter_active_nodes(&net, FilterMode::Fixpoint);
        assert_eq!(fixed.num_nodes(), 2);
        // invariant: every survivor is active in every phase
        for t in 0..fixed.num_phases() {
            let g = fixed.snapshot(t).unwrap().undirected_view();
            for u in 0..fixed.num_nodes() as NodeId {
                assert!(g.degree(u) > 0);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let events = vec![ev("a", "b", 0, 2, 1, 300), ev("b", "c", 5, 0, 4, 0)];
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &events).unwrap();
        let back = read_events_csv(&buf[..]).unwrap();
        assert_eq!(back, events);
    }

    #[test]
    fn csv_rejects_negative_counts_with_line() {
        let data = "caller,callee,month,calls,texts,duration_s\na,b,0,-1,0,0\n";
        let err = read_events_csv(data.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 2, .. }));
    }
}
