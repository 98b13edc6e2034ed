//! Tie range: the length of the second shortest path between two connected
//! nodes, i.e. their distance once the edge between them is removed.
//!
//! The batch pass avoids per-edge graph mutation entirely: range 2 is
//! detected by common-neighbor intersection, everything else by an
//! early-exit bidirectional BFS that never traverses the excluded edge and
//! stops as soon as the remaining distance provably reaches the cap. Edges
//! whose endpoints disconnect (bridges) are classified up front in one
//! linear pass, so the capped search never has to prove unreachability.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, UndirectedGraph};
use crate::Threads;

/// Second-shortest-path length class. Distances of `cap` (default 6) or more
/// merge into [`TieRange::SixPlus`]; endpoints with no alternative path at
/// all are [`TieRange::Infinite`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TieRange {
    Two,
    Three,
    Four,
    Five,
    SixPlus,
    Infinite,
}

pub const DEFAULT_CAP: u32 = 6;

impl TieRange {
    /// All classes in reporting order.
    pub const ALL: [TieRange; 6] = [
        TieRange::Two,
        TieRange::Three,
        TieRange::Four,
        TieRange::Five,
        TieRange::SixPlus,
        TieRange::Infinite,
    ];

    /// The finite classes that enter transition matrices, in axis order.
    pub const FINITE: [TieRange; 5] =
        [TieRange::Two, TieRange::Three, TieRange::Four, TieRange::Five, TieRange::SixPlus];

    pub fn from_distance(dist: Option<u32>, cap: u32) -> TieRange {
        match dist {
            None => TieRange::Infinite,
            Some(d) if d >= cap => TieRange::SixPlus,
            Some(2) => TieRange::Two,
            Some(3) => TieRange::Three,
            Some(4) => TieRange::Four,
            Some(5) => TieRange::Five,
            Some(d) => unreachable!("tie range distance {d} below 2"),
        }
    }

    /// CSV encoding: `2`..`5`, `6+`, `inf`.
    pub fn label(&self) -> &'static str {
        match self {
            TieRange::Two => "2",
            TieRange::Three => "3",
            TieRange::Four => "4",
            TieRange::Five => "5",
            TieRange::SixPlus => "6+",
            TieRange::Infinite => "inf",
        }
    }

    pub fn parse(s: &str) -> Option<TieRange> {
        Some(match s {
            "2" => TieRange::Two,
            "3" => TieRange::Three,
            "4" => TieRange::Four,
            "5" => TieRange::Five,
            "6+" => TieRange::SixPlus,
            "inf" => TieRange::Infinite,
            _ => return None,
        })
    }

    /// Index into [`TieRange::FINITE`]; `None` for infinite ranges.
    pub fn finite_index(&self) -> Option<usize> {
        match self {
            TieRange::Two => Some(0),
            TieRange::Three => Some(1),
            TieRange::Four => Some(2),
            TieRange::Five => Some(3),
            TieRange::SixPlus => Some(4),
            TieRange::Infinite => None,
        }
    }

    pub fn class(&self) -> Option<TieClass> {
        match self {
            TieRange::Two => Some(TieClass::Short),
            TieRange::Three | TieRange::Four => Some(TieClass::Mid),
            TieRange::Five | TieRange::SixPlus => Some(TieClass::Long),
            TieRange::Infinite => None,
        }
    }
}

/// Short (range 2) / mid (3-4) / long (5 or more) taxonomy. Infinite-range
/// ties fall outside it and are reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TieClass {
    Short,
    Mid,
    Long,
}

fn validate_cap(cap: u32) -> Result<()> {
    // the class set stops at "six plus", so caps beyond 6 cannot be represented
    if !(2..=6).contains(&cap) {
        return Err(Error::InvalidArgument(format!("cap must be in 2..=6, got {cap}")));
    }
    Ok(())
}

/// Scratch buffers for the bidirectional search, reused across edges.
/// Visited marks are epoch-stamped so clearing between edges is O(1).
struct SearchScratch {
    dist_a: Vec<u32>,
    dist_b: Vec<u32>,
    mark_a: Vec<u32>,
    mark_b: Vec<u32>,
    epoch: u32,
    frontier_a: Vec<NodeId>,
    frontier_b: Vec<NodeId>,
    next: Vec<NodeId>,
}

impl SearchScratch {
    fn new(n: usize) -> Self {
        Self {
            dist_a: vec![0; n],
            dist_b: vec![0; n],
            mark_a: vec![0; n],
            mark_b: vec![0; n],
            epoch: 0,
            frontier_a: Vec::new(),
            frontier_b: Vec::new(),
            next: Vec::new(),
        }
    }
}

/// Outcome of the capped search: either an exact distance, or proof that the
/// distance is at least `cap` (finite-ness still unknown).
enum Capped {
    Exact(u32),
    AtLeastCap,
    Disconnected,
}

/// Bidirectional level-synchronous BFS for the distance from `u` to `v` with
/// edge {u, v} excluded, early-exiting once the distance provably reaches
/// `cap`. After any level expansion that produces meeting candidates, the
/// minimum candidate is the exact distance.
fn capped_bidirectional(g: &UndirectedGraph, u: NodeId, v: NodeId, cap: u32, s: &mut SearchScratch) -> Capped {
    s.epoch += 1;
    let epoch = s.epoch;
    s.mark_a[u as usize] = epoch;
    s.dist_a[u as usize] = 0;
    s.mark_b[v as usize] = epoch;
    s.dist_b[v as usize] = 0;
    s.frontier_a.clear();
    s.frontier_a.push(u);
    s.frontier_b.clear();
    s.frontier_b.push(v);
    let (mut radius_a, mut radius_b) = (0u32, 0u32);
    let mut best = u32::MAX;

    loop {
        if s.frontier_a.is_empty() || s.frontier_b.is_empty() {
            return Capped::Disconnected;
        }
        if radius_a + radius_b + 1 >= cap {
            return Capped::AtLeastCap;
        }
        let expand_a = s.frontier_a.len() <= s.frontier_b.len();
        let (frontier, own_dist, own_mark, other_dist, other_mark, radius) = if expand_a {
            (&mut s.frontier_a, &mut s.dist_a, &mut s.mark_a, &s.dist_b, &s.mark_b, &mut radius_a)
        } else {
            (&mut s.frontier_b, &mut s.dist_b, &mut s.mark_b, &s.dist_a, &s.mark_a, &mut radius_b)
        };
        let depth = *radius + 1;
        s.next.clear();
        for &x in frontier.iter() {
            for &y in g.neighbors(x) {
                if (x == u && y == v) || (x == v && y == u) {
                    continue; // the excluded edge
                }
                if own_mark[y as usize] != epoch {
                    own_mark[y as usize] = epoch;
                    own_dist[y as usize] = depth;
                    s.next.push(y);
                    if other_mark[y as usize] == epoch {
                        best = best.min(depth + other_dist[y as usize]);
                    }
                }
            }
        }
        std::mem::swap(frontier, &mut s.next);
        *radius += 1;
        if best != u32::MAX {
            // the completed expansion has seen every candidate that could
            // beat `best`, so it is exact
            return if best >= cap { Capped::AtLeastCap } else { Capped::Exact(best) };
        }
    }
}

/// Tie range of one edge. Errors if {u, v} is not an edge.
pub fn tie_range(g: &UndirectedGraph, u: NodeId, v: NodeId, cap: u32) -> Result<TieRange> {
    validate_cap(cap)?;
    if !g.has_edge(u, v) {
        return Err(Error::NotAnEdge { u, v });
    }
    if g.have_common_neighbor(u, v) {
        return Ok(TieRange::from_distance(Some(2), cap));
    }
    let mut scratch = SearchScratch::new(g.num_nodes());
    match capped_bidirectional(g, u, v, cap, &mut scratch) {
        Capped::Exact(d) => Ok(TieRange::from_distance(Some(d), cap)),
        Capped::Disconnected => Ok(TieRange::Infinite),
        Capped::AtLeastCap => {
            // distance is at least cap; a plain reachability BFS settles
            // whether any alternative path exists at all
            if reachable_without_edge(g, u, v) {
                Ok(TieRange::SixPlus)
            } else {
                Ok(TieRange::Infinite)
            }
        }
    }
}

/// Full (uncapped) BFS reachability of `v` from `u` in the graph minus {u, v}.
fn reachable_without_edge(g: &UndirectedGraph, u: NodeId, v: NodeId) -> bool {
    let mut seen = vec![false; g.num_nodes()];
    let mut queue = std::collections::VecDeque::new();
    seen[u as usize] = true;
    queue.push_back(u);
    while let Some(x) = queue.pop_front() {
        for &y in g.neighbors(x) {
            if (x == u && y == v) || (x == v && y == u) {
                continue;
            }
            if !seen[y as usize] {
                if y == v {
                    return true;
                }
                seen[y as usize] = true;
                queue.push_back(y);
            }
        }
    }
    false
}

fn classify_edge(
    g: &UndirectedGraph,
    u: NodeId,
    v: NodeId,
    cap: u32,
    bridges: &std::collections::HashSet<(NodeId, NodeId)>,
    scratch: &mut SearchScratch,
) -> TieRange {
    if bridges.contains(&(u, v)) {
        return TieRange::Infinite;
    }
    if g.have_common_neighbor(u, v) {
        return TieRange::from_distance(Some(2), cap);
    }
    match capped_bidirectional(g, u, v, cap, scratch) {
        Capped::Exact(d) => TieRange::from_distance(Some(d), cap),
        // not a bridge, so some alternative path exists
        Capped::AtLeastCap => TieRange::SixPlus,
        Capped::Disconnected => TieRange::Infinite,
    }
}

/// Tie range for every edge of the graph. Equivalent to calling
/// [`tie_range`] per edge; the result is independent of scheduling.
pub fn tie_range_all(g: &UndirectedGraph, cap: u32, threads: Threads) -> Result<BTreeMap<(NodeId, NodeId), TieRange>> {
    validate_cap(cap)?;
    #[cfg(feature = "parallel")]
    {
        Ok(crate::run_with_threads(threads, || tie_range_all_par_impl(g, cap)))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(tie_range_all_seq_impl(g, cap))
    }
}

/// Sequential kernel. Always available; the benchmark suite compares it
/// against the rayon kernel.
pub fn tie_range_all_seq(g: &UndirectedGraph, cap: u32) -> Result<BTreeMap<(NodeId, NodeId), TieRange>> {
    validate_cap(cap)?;
    Ok(tie_range_all_seq_impl(g, cap))
}

fn tie_range_all_seq_impl(g: &UndirectedGraph, cap: u32) -> BTreeMap<(NodeId, NodeId), TieRange> {
    let bridges: std::collections::HashSet<_> = g.bridges().into_iter().collect();
    let mut scratch = SearchScratch::new(g.num_nodes());
    g.edges()
        .map(|(u, v)| ((u, v), classify_edge(g, u, v, cap, &bridges, &mut scratch)))
        .collect()
}

#[cfg(feature = "parallel")]
pub fn tie_range_all_par(g: &UndirectedGraph, cap: u32) -> Result<BTreeMap<(NodeId, NodeId), TieRange>> {
    validate_cap(cap)?;
    Ok(tie_range_all_par_impl(g, cap))
}

#[cfg(feature = "parallel")]
fn tie_range_all_par_impl(g: &UndirectedGraph, cap: u32) -> BTreeMap<(NodeId, NodeId), TieRange> {
    use rayon::prelude::*;
    let bridges: std::collections::HashSet<_> = g.bridges().into_iter().collect();
    let edges: Vec<(NodeId, NodeId)> = g.edges().collect();
    let ranges: Vec<TieRange> = edges
        .par_iter()
        .map_init(
            || SearchScratch::new(g.num_nodes()),
            |scratch, &(u, v)| classify_edge(g, u, v, cap, &bridges, scratch),
        )
        .collect();
    edges.into_iter().zip(ranges).collect()
}

/// Counts and proportions per tie-range class, including infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeDistribution {
    pub total_edges: u64,
    /// Indexed like [`TieRange::ALL`].
    pub counts: [u64; 6],
    pub proportions: [f64; 6],
}

pub fn range_distribution(g: &UndirectedGraph, cap: u32, threads: Threads) -> Result<RangeDistribution> {
    let ranges = tie_range_all(g, cap, threads)?;
    let mut counts = [0u64; 6];
    for (_, r) in &ranges {
        let idx = TieRange::ALL.iter().position(|x| x == r).unwrap();
        counts[idx] += 1;
    }
    let total: u64 = counts.iter().sum();
    let mut proportions = [0.0; 6];
    if total > 0 {
        for (p, &c) in proportions.iter_mut().zip(&counts) {
            *p = c as f64 / total as f64;
        }
    }
    Ok(RangeDistribution { total_edges: total, counts, proportions })
}

/// What [`drop_random`] removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropTarget {
    Nodes,
    Edges,
}

/// Remove a uniformly random `floor(fraction * population)` subset of nodes
/// or edges, without replacement, deterministically for a given seed.
/// Dropped nodes keep their ids but lose all incident edges.
pub fn drop_random(g: &UndirectedGraph, fraction: f64, what: DropTarget, seed: u64) -> Result<UndirectedGraph> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("drop fraction must be in (0,1), got {fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.num_nodes();
    let mut weights = BTreeMap::new();
    match what {
        DropTarget::Nodes => {
            let k = (fraction * n as f64).floor() as usize;
            let mut dropped = vec![false; n];
            for i in sample(&mut rng, n, k) {
                dropped[i] = true;
            }
            for (u, v) in g.edges() {
                if !dropped[u as usize] && !dropped[v as usize] {
                    weights.insert((u, v), (g.edge_freq(u, v).unwrap(), g.edge_dur(u, v).unwrap()));
                }
            }
        }
        DropTarget::Edges => {
            let edges: Vec<_> = g.edges().collect();
            let k = (fraction * edges.len() as f64).floor() as usize;
            let mut dropped = vec![false; edges.len()];
            for i in sample(&mut rng, edges.len(), k) {
                dropped[i] = true;
            }
            for (i, &(u, v)) in edges.iter().enumerate() {
                if !dropped[i] {
                    weights.insert((u, v), (g.edge_freq(u, v).unwrap(), g.edge_dur(u, v).unwrap()));
                }
            }
        }
    }
    Ok(UndirectedGraph::from_weights(n, &weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: remove the edge, then plain single-source BFS.
    fn oracle(g: &UndirectedGraph, u: NodeId, v: NodeId, cap: u32) -> TieRange {
        let edges: Vec<_> = g.edges().filter(|&e| e != (u.min(v), u.max(v))).collect();
        let h = UndirectedGraph::from_edges(g.num_nodes(), edges);
        let mut dist = vec![u32::MAX; h.num_nodes()];
        let mut queue = std::collections::VecDeque::new();
        dist[u as usize] = 0;
        queue.push_back(u);
        while let Some(x) = queue.pop_front() {
            for &y in h.neighbors(x) {
                if dist[y as usize] == u32::MAX {
                    dist[y as usize] = dist[x as usize] + 1;
                    queue.push_back(y);
                }
            }
        }
        let d = dist[v as usize];
        TieRange::from_distance(if d == u32::MAX { None } else { Some(d) }, cap)
    }

    fn petersen() -> UndirectedGraph {
        // outer 5-cycle 0..4, inner pentagram 5..9, spokes i -- i+5
        let mut edges = Vec::new();
        for i in 0..5u32 {
            edges.push((i, (i + 1) % 5));
            edges.push((i + 5, (i + 2) % 5 + 5));
            edges.push((i, i + 5));
        }
        UndirectedGraph::from_edges(10, edges)
    }

    #[test]
    fn triangle_edge_is_two() {
        let g = UndirectedGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]);
        for (u, v) in [(0, 1), (1, 2), (0, 2)] {
            assert_eq!(tie_range(&g, u, v, 6).unwrap(), TieRange::Two);
        }
    }

    #[test]
    fn four_cycle_edge_is_three() {
        let g = UndirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert_eq!(tie_range(&g, 0, 1, 6).unwrap(), TieRange::Three);
    }

    #[test]
    fn bridge_is_infinite() {
        let g = UndirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]);
        assert_eq!(tie_range(&g, 1, 2, 6).unwrap(), TieRange::Infinite);
    }

    #[test]
    fn petersen_every_edge_is_four() {
        let g = petersen();
        for (u, v) in g.edges() {
            assert_eq!(tie_range(&g, u, v, 6).unwrap(), TieRange::Four, "edge ({u},{v})");
            assert_eq!(oracle(&g, u, v, 6), TieRange::Four);
        }
    }

    #[test]
    fn long_cycle_hits_cap() {
        // 8-cycle: alternative path has length 7 -> SixPlus at cap 6
        let g = UndirectedGraph::from_edges(8, (0..8u32).map(|i| (i, (i + 1) % 8)));
        assert_eq!(tie_range(&g, 0, 1, 6).unwrap(), TieRange::SixPlus);
        // exact at a looser-than-needed cap within the representable band
        let g6 = UndirectedGraph::from_edges(6, (0..6u32).map(|i| (i, (i + 1) % 6)));
        assert_eq!(tie_range(&g6, 0, 1, 6).unwrap(), TieRange::Five);
        assert_eq!(tie_range(&g6, 0, 1, 5).unwrap(), TieRange::SixPlus);
    }

    #[test]
    fn non_edge_is_an_error() {
        let g = UndirectedGraph::from_edges(3, [(0, 1), (1, 2)]);
        assert!(matches!(tie_range(&g, 0, 2, 6), Err(Error::NotAnEdge { .. })));
    }

    #[test]
    fn invalid_cap_rejected() {
        let g = UndirectedGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]);
        assert!(tie_range(&g, 0, 1, 1).is_err());
        assert!(tie_range(&g, 0, 1, 7).is_err());
    }

    #[test]
    fn batch_matches_per_edge_on_random_graphs() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..25 {
            let n = rng.random_range(5..60usize);
            let p = rng.random_range(0.02..0.25f64);
            let mut edges = Vec::new();
            for a in 0..n as NodeId {
                for b in (a + 1)..n as NodeId {
                    if rng.random::<f64>() < p {
                        edges.push((a, b));
                    }
                }
            }
            let g = UndirectedGraph::from_edges(n, edges);
            let all = tie_range_all(&g, 6, Threads::default()).unwrap();
            let seq = tie_range_all_seq(&g, 6).unwrap();
            assert_eq!(all, seq, "trial {trial}");
            for ((u, v), r) in &all {
                assert_eq!(*r, oracle(&g, *u, *v, 6), "trial {trial} edge ({u},{v})");
            }
        }
    }

    #[test]
    fn distribution_counts_sum_to_edges() {
        let g = UndirectedGraph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let d = range_distribution(&g, 6, Threads::default()).unwrap();
        assert_eq!(d.total_edges, 6);
        assert_eq!(d.counts[0], 6); // K4: everything range 2
        assert!((d.proportions[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn drop_random_is_deterministic_and_exact() {
        let mut edges = Vec::new();
        for a in 0..25u32 {
            for b in (a + 1)..25 {
                if (a + b) % 3 == 0 {
                    edges.push((a, b));
                }
            }
        }
        let g = UndirectedGraph::from_edges(25, edges);
        let e = g.num_edges();
        let d1 = drop_random(&g, 0.2, DropTarget::Edges, 7).unwrap();
        let d2 = drop_random(&g, 0.2, DropTarget::Edges, 7).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(d1.num_edges(), e - (0.2 * e as f64).floor() as usize);
        // fraction too small to remove anything
        let tiny = drop_random(&g, 1e-4, DropTarget::Edges, 7).unwrap();
        assert_eq!(tiny.num_edges(), e);
        let dn = drop_random(&g, 0.2, DropTarget::Nodes, 9).unwrap();
        assert_eq!(dn.num_nodes(), g.num_nodes());
        assert!(dn.num_edges() < e);
    }

    #[test]
    fn drop_fraction_bounds_checked() {
        let g = UndirectedGraph::from_edges(3, [(0, 1)]);
        assert!(drop_random(&g, 0.0, DropTarget::Edges, 1).is_err());
        assert!(drop_random(&g, 1.0, DropTarget::Edges, 1).is_err());
    }
}
