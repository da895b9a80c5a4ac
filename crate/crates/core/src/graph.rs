//! Directed weighted graph over ISO-coded nodes.
//!
//! [`TradeNetwork`] is immutable after construction: adjacency queries are
//! O(1) via a hashed ordered-pair set, and the edge list is kept sorted by
//! `(source, target)` so serialization and iteration are deterministic.
//! Edge weights are flow values in thousands of USD; a zero-weight edge is
//! still a structural edge (an observed flow of zero is an observation, not
//! an absence).

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

/// Dense node handle paired with its ISO 3166-1 alpha-3 code.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeId {
    pub index: usize,
    pub iso3: String,
}

/// A directed edge: `source` exports to `target` with the given flow value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Directed weighted network over a fixed node universe.
#[derive(Debug, Clone)]
pub struct TradeNetwork {
    nodes: Vec<String>,
    index_of: HashMap<String, usize>,
    edges: Vec<Edge>,
    adjacency: HashSet<(usize, usize)>,
    period: i32,
}

/// Weak-component labelling: each node is tagged with the smallest node
/// index in its component, so the labelling is canonical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    pub labels: Vec<usize>,
    pub count: usize,
    pub giant_size: usize,
}

impl TradeNetwork {
    /// Build a network from `(source_iso3, target_iso3, weight)` records over
    /// an explicit node universe.
    ///
    /// Every record's codes must appear in the universe; self-loops,
    /// duplicate ordered pairs, and negative weights are rejected. Universe
    /// order fixes node indices.
    pub fn build(
        edge_records: &[(String, String, f64)],
        node_universe: &[String],
        period: i32,
    ) -> Result<Self> {
        let mut index_of = HashMap::with_capacity(node_universe.len());
        for (i, code) in node_universe.iter().enumerate() {
            if index_of.insert(code.clone(), i).is_some() {
                return Err(Error::DuplicateNode(code.clone()));
            }
        }

        let mut edges = Vec::with_capacity(edge_records.len());
        let mut adjacency = HashSet::with_capacity(edge_records.len());
        for (src, tgt, weight) in edge_records {
            let s = *index_of
                .get(src)
                .ok_or_else(|| Error::UnknownCode(src.clone()))?;
            let t = *index_of
                .get(tgt)
                .ok_or_else(|| Error::UnknownCode(tgt.clone()))?;
            if s == t {
                return Err(Error::SelfLoop(src.clone()));
            }
            if *weight < 0.0 || weight.is_nan() {
                return Err(Error::NegativeWeight {
                    reporter: src.clone(),
                    partner: tgt.clone(),
                    weight: *weight,
                });
            }
            if !adjacency.insert((s, t)) {
                return Err(Error::DuplicateEdge(src.clone(), tgt.clone()));
            }
            edges.push(Edge {
                source: s,
                target: t,
                weight: *weight,
            });
        }
        edges.sort_by(|a, b| (a.source, a.target).cmp(&(b.source, b.target)));

        Ok(TradeNetwork {
            nodes: node_universe.to_vec(),
            index_of,
            edges,
            adjacency,
            period,
        })
    }

    /// Convenience constructor for tests and simulation: indices instead of
    /// iso3 codes, node names synthesized as N000, N001, ...
    pub fn from_index_edges(n: usize, edges: &[(usize, usize, f64)], period: i32) -> Result<Self> {
        let universe: Vec<String> = (0..n).map(|i| format!("N{i:03}")).collect();
        Self::with_nodes(universe, edges, period)
    }

    /// Build over an explicit code list with index-addressed edges.
    pub fn with_nodes(
        nodes: Vec<String>,
        edges: &[(usize, usize, f64)],
        period: i32,
    ) -> Result<Self> {
        let records: Vec<(String, String, f64)> = edges
            .iter()
            .map(|&(s, t, w)| (nodes[s].clone(), nodes[t].clone(), w))
            .collect();
        Self::build(&records, &nodes, period)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn period(&self) -> i32 {
        self.period
    }

    /// Node codes in index order.
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_id(&self, index: usize) -> NodeId {
        NodeId {
            index,
            iso3: self.nodes[index].clone(),
        }
    }

    pub fn index_of(&self, iso3: &str) -> Option<usize> {
        self.index_of.get(iso3).copied()
    }

    /// Edges sorted by `(source, target)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Adjacency indicator Y(i, j).
    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.adjacency.contains(&(source, target))
    }

    /// Weight of the edge `source -> target`, `None` if the edge is absent.
    /// Edges are kept sorted by ordered pair, so this is a binary search.
    pub fn weight(&self, source: usize, target: usize) -> Option<f64> {
        self.edges
            .binary_search_by(|e| (e.source, e.target).cmp(&(source, target)))
            .ok()
            .map(|i| self.edges[i].weight)
    }

    /// Per-node out-degrees.
    pub fn out_degrees(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            d[e.source] += 1;
        }
        d
    }

    /// Per-node in-degrees.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            d[e.target] += 1;
        }
        d
    }

    /// Per-node out-strength: sum of outgoing edge weights.
    pub fn out_strengths(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.nodes.len()];
        for e in &self.edges {
            s[e.source] += e.weight;
        }
        s
    }

    /// Subgraph keeping exactly the edges with `weight >= w_min` over the
    /// same node set (threshold semantics is closed, so `w_min = 0` is the
    /// identity). Nodes are never dropped; stranded nodes become singleton
    /// components.
    pub fn threshold_subgraph(&self, w_min: f64) -> TradeNetwork {
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .filter(|e| e.weight >= w_min)
            .copied()
            .collect();
        let adjacency = edges.iter().map(|e| (e.source, e.target)).collect();
        TradeNetwork {
            nodes: self.nodes.clone(),
            index_of: self.index_of.clone(),
            edges,
            adjacency,
            period: self.period,
        }
    }

    /// Weakly connected components (edge direction ignored).
    ///
    /// The label of every node is the smallest node index in its component.
    pub fn weak_components(&self) -> ComponentLabeling {
        let n = self.nodes.len();
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            neighbors[e.source].push(e.target);
            neighbors[e.target].push(e.source);
        }

        let mut labels = vec![usize::MAX; n];
        let mut stack = Vec::new();
        let mut count = 0;
        let mut giant_size = 0;

        for start in 0..n {
            if labels[start] != usize::MAX {
                continue;
            }
            // `start` is the smallest unvisited index, hence the smallest
            // index in its component: it names the component.
            count += 1;
            let mut size = 0;
            labels[start] = start;
            stack.push(start);
            while let Some(v) = stack.pop() {
                size += 1;
                for &u in &neighbors[v] {
                    if labels[u] == usize::MAX {
                        labels[u] = start;
                        stack.push(u);
                    }
                }
            }
            giant_size = giant_size.max(size);
        }

        ComponentLabeling {
            labels,
            count,
            giant_size,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn rec(s: &str, t: &str, w: f64) -> (String, String, f64) {
        (s.to_string(), t.to_string(), w)
    }

    #[test]
    fn single_edge_construction() {
        let net = TradeNetwork::build(
            &[rec("COL", "USA", 100.0)],
            &codes(&["COL", "USA", "DEU"]),
            2018,
        )
        .unwrap();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.edge_count(), 1);
        let col = net.index_of("COL").unwrap();
        let usa = net.index_of("USA").unwrap();
        assert!(net.has_edge(col, usa));
        assert!(!net.has_edge(usa, col));
    }

    #[test]
    fn empty_graph_has_no_adjacency() {
        let universe: Vec<String> = (0..186).map(|i| format!("C{i:03}")).collect();
        let net = TradeNetwork::build(&[], &universe, 2018).unwrap();
        assert_eq!(net.node_count(), 186);
        assert_eq!(net.edge_count(), 0);
        for i in 0..10 {
            for j in 0..10 {
                assert!(!net.has_edge(i, j));
            }
        }
    }

    #[test]
    fn zero_weight_edges_are_structural() {
        let net =
            TradeNetwork::build(&[rec("COL", "USA", 0.0)], &codes(&["COL", "USA"]), 2018).unwrap();
        assert_eq!(net.edge_count(), 1);
        assert!(net.has_edge(0, 1));
    }

    #[test]
    fn unknown_code_is_rejected_by_name() {
        let err = TradeNetwork::build(&[rec("COL", "EUN", 5.0)], &codes(&["COL", "USA"]), 2018)
            .unwrap_err();
        assert!(err.to_string().contains("EUN"), "{err}");
    }

    #[test]
    fn self_loop_is_rejected() {
        let err = TradeNetwork::build(&[rec("COL", "COL", 5.0)], &codes(&["COL", "USA"]), 2018)
            .unwrap_err();
        assert!(matches!(err, Error::SelfLoop(_)));
    }

    #[test]
    fn duplicate_pair_is_rejected() {
        let err = TradeNetwork::build(
            &[rec("COL", "USA", 5.0), rec("COL", "USA", 7.0)],
            &codes(&["COL", "USA"]),
            2018,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateEdge(_, _)));
    }

    #[test]
    fn negative_weight_is_rejected() {
        let err = TradeNetwork::build(&[rec("COL", "USA", -1.0)], &codes(&["COL", "USA"]), 2018)
            .unwrap_err();
        assert!(matches!(err, Error::NegativeWeight { .. }));
    }

    #[test]
    fn duplicate_universe_code_is_rejected() {
        let err = TradeNetwork::build(&[], &codes(&["COL", "COL"]), 2018).unwrap_err();
        assert!(matches!(err, Error::DuplicateNode(_)));
    }

    #[test]
    fn threshold_zero_is_identity() {
        let net =
            TradeNetwork::from_index_edges(4, &[(0, 1, 5.0), (1, 2, 10.0), (2, 3, 20.0)], 2018)
                .unwrap();
        let sub = net.threshold_subgraph(0.0);
        assert_eq!(sub.edges(), net.edges());
    }

    #[test]
    fn threshold_filters_by_weight() {
        let net =
            TradeNetwork::from_index_edges(4, &[(0, 1, 5.0), (1, 2, 10.0), (2, 3, 20.0)], 2018)
                .unwrap();
        let sub = net.threshold_subgraph(10.0);
        assert_eq!(sub.edge_count(), 2);
        assert_eq!(sub.node_count(), 4);
    }

    #[test]
    fn threshold_above_max_strands_everyone() {
        let net = TradeNetwork::from_index_edges(3, &[(0, 1, 5.0), (1, 2, 9.0)], 2018).unwrap();
        let sub = net.threshold_subgraph(100.0);
        assert_eq!(sub.edge_count(), 0);
        let comps = sub.weak_components();
        assert_eq!(comps.count, 3);
        assert_eq!(comps.giant_size, 1);
    }

    #[test]
    fn edgeless_graph_components() {
        let net = TradeNetwork::from_index_edges(5, &[], 2018).unwrap();
        let comps = net.weak_components();
        assert_eq!(comps.count, 5);
        assert_eq!(comps.giant_size, 1);
        assert_eq!(comps.labels, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn two_pairs_and_an_isolate() {
        let net = TradeNetwork::from_index_edges(5, &[(1, 2, 1.0), (3, 4, 1.0)], 2018).unwrap();
        let comps = net.weak_components();
        assert_eq!(comps.count, 3);
        assert_eq!(comps.giant_size, 2);
        assert_eq!(comps.labels, vec![0, 1, 1, 3, 3]);
    }

    #[test]
    fn components_ignore_direction() {
        let net = TradeNetwork::from_index_edges(3, &[(2, 0, 1.0), (1, 2, 1.0)], 2018).unwrap();
        let comps = net.weak_components();
        assert_eq!(comps.count, 1);
        assert_eq!(comps.giant_size, 3);
        assert_eq!(comps.labels, vec![0, 0, 0]);
    }
}
