//! Compact undirected graph used by the structural analyses.

use std::collections::BTreeMap;

pub type NodeId = u32;

/// Undirected weighted graph in CSR form with sorted adjacency lists.
///
/// Built from a phase snapshot by symmetrizing the directed weights
/// (F̃ = F_ij + F_ji, D̃ = D_ij + D_ji); an edge exists iff F̃ > 0.
/// Sorted neighbor lists make common-neighbor intersection and `has_edge`
/// cheap, which the tie-range pass leans on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    freq: Vec<u64>,
    dur: Vec<u64>,
}

impl UndirectedGraph {
    /// Build from symmetrized per-edge weights keyed by `(u, v)` with `u < v`.
    /// Entries with zero frequency are dropped.
    pub fn from_weights(num_nodes: usize, weights: &BTreeMap<(NodeId, NodeId), (u64, u64)>) -> Self {
        let mut degree = vec![0usize; num_nodes];
        for (&(u, v), &(f, _)) in weights {
            debug_assert!(u < v, "edge keys must be ordered");
            if f > 0 {
                degree[u as usize] += 1;
                degree[v as usize] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0usize);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let total = *offsets.last().unwrap();
        let mut neighbors = vec![0 as NodeId; total];
        let mut freq = vec![0u64; total];
        let mut dur = vec![0u64; total];
        let mut cursor = offsets[..num_nodes].to_vec();
        // BTreeMap iteration is ordered by (u, v), so each node's list comes
        // out sorted without a separate sort pass.
        for (&(u, v), &(f, d)) in weights {
            if f == 0 {
                continue;
            }
            let cu = &mut cursor[u as usize];
            neighbors[*cu] = v;
            freq[*cu] = f;
            dur[*cu] = d;
            *cu += 1;
            let cv = &mut cursor[v as usize];
            neighbors[*cv] = u;
            freq[*cv] = f;
            dur[*cv] = d;
            *cv += 1;
        }
        Self { offsets, neighbors, freq, dur }
    }

    /// Build from an unweighted edge list (frequency 1, duration 0 per edge).
    /// Self-loops are rejected and duplicates collapse.
    pub fn from_edges(num_nodes: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        let mut weights = BTreeMap::new();
        for (a, b) in edges {
            assert_ne!(a, b, "self-loop");
            let key = if a < b { (a, b) } else { (b, a) };
            weights.insert(key, (1u64, 0u64));
        }
        Self::from_weights(num_nodes, &weights)
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.offsets[u as usize + 1] - self.offsets[u as usize]
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.neighbors[self.offsets[u as usize]..self.offsets[u as usize + 1]]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Symmetric frequency weight F̃ of edge {u, v}, if present.
    pub fn edge_freq(&self, u: NodeId, v: NodeId) -> Option<u64> {
        self.neighbors(u)
            .binary_search(&v)
            .ok()
            .map(|i| self.freq[self.offsets[u as usize] + i])
    }

    /// Symmetric duration weight D̃ of edge {u, v}, if present.
    pub fn edge_dur(&self, u: NodeId, v: NodeId) -> Option<u64> {
        self.neighbors(u)
            .binary_search(&v)
            .ok()
            .map(|i| self.dur[self.offsets[u as usize] + i])
    }

    /// Iterate edges as `(u, v)` with `u < v`, in deterministic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes() as NodeId).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// True if u and v share at least one neighbor (sorted-list intersection).
    pub fn have_common_neighbor(&self, u: NodeId, v: NodeId) -> bool {
        let (nu, nv) = (self.neighbors(u), self.neighbors(v));
        let (mut i, mut j) = (0, 0);
        while i < nu.len() && j < nv.len() {
            match nu[i].cmp(&nv[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    /// Common neighbors of u and v.
    pub fn common_neighbors(&self, u: NodeId, v: NodeId) -> Vec<NodeId> {
        let (nu, nv) = (self.neighbors(u), self.neighbors(v));
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < nu.len() && j < nv.len() {
            match nu[i].cmp(&nv[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(nu[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    /// Bridge edges (removal disconnects their endpoints), as `(u, v)` pairs
    /// with `u < v`, sorted. Iterative Tarjan lowpoint computation; recursion
    /// would overflow on path-like graphs at the scales this crate targets.
    /// The graph is simple, so skipping the parent vertex skips exactly the
    /// tree edge.
    pub fn bridges(&self) -> Vec<(NodeId, NodeId)> {
        let n = self.num_nodes();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![usize::MAX; n];
        let mut parent = vec![NodeId::MAX; n];
        let mut timer = 0usize;
        let mut bridges = Vec::new();
        let mut stack: Vec<(NodeId, usize)> = Vec::new();
        for root in 0..n as NodeId {
            if disc[root as usize] != usize::MAX {
                continue;
            }
            disc[root as usize] = timer;
            low[root as usize] = timer;
            timer += 1;
            stack.push((root, self.offsets[root as usize]));
            while let Some(&mut (u, ref mut slot)) = stack.last_mut() {
                if *slot < self.offsets[u as usize + 1] {
                    let v = self.neighbors[*slot];
                    *slot += 1;
                    if disc[v as usize] == usize::MAX {
                        parent[v as usize] = u;
                        disc[v as usize] = timer;
                        low[v as usize] = timer;
                        timer += 1;
                        stack.push((v, self.offsets[v as usize]));
                    } else if v != parent[u as usize] {
                        low[u as usize] = low[u as usize].min(disc[v as usize]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _)) = stack.last() {
                        low[p as usize] = low[p as usize].min(low[u as usize]);
                        if low[u as usize] > disc[p as usize] {
                            bridges.push(if p < u { (p, u) } else { (u, p) });
                        }
                    }
                }
            }
        }
        bridges.sort_unstable();
        bridges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_layout_and_symmetry() {
        let g = UndirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 1)]);
        assert_eq!(g.num_nodes(), 4);
        assert_eq!(g.num_edges(), 4);
        assert_eq!(g.neighbors(1), &[0, 2, 3]);
        assert!(g.has_edge(3, 1) && g.has_edge(1, 3));
        assert!(!g.has_edge(0, 2));
        assert_eq!(g.edges().count(), 4);
    }

    #[test]
    fn zero_frequency_edges_dropped() {
        let mut w = BTreeMap::new();
        w.insert((0, 1), (2u64, 30u64));
        w.insert((1, 2), (0u64, 99u64));
        let g = UndirectedGraph::from_weights(3, &w);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.edge_freq(0, 1), Some(2));
        assert_eq!(g.edge_dur(1, 0), Some(30));
        assert!(!g.has_edge(1, 2));
    }

    #[test]
    fn common_neighbors_of_triangle_plus_leaf() {
        let g = UndirectedGraph::from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)]);
        assert!(g.have_common_neighbor(0, 1));
        assert_eq!(g.common_neighbors(0, 1), vec![2]);
        let path = UndirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]);
        assert!(!path.have_common_neighbor(0, 3));
    }

    #[test]
    fn bridges_on_barbell() {
        // two triangles joined by a single edge {2,3}
        let g = UndirectedGraph::from_edges(
            6,
            [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)],
        );
        assert_eq!(g.bridges(), vec![(2, 3)]);
    }

    #[test]
    fn bridges_on_tree_are_all_edges() {
        let g = UndirectedGraph::from_edges(5, [(0, 1), (1, 2), (1, 3), (3, 4)]);
        assert_eq!(g.bridges().len(), 4);
    }

    #[test]
    fn bridges_on_cycle_are_none() {
        let g = UndirectedGraph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        assert!(g.bridges().is_empty());
    }
}
