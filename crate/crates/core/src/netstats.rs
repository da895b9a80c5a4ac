//! Structural statistics of a directed weighted network.
//!
//! Definitions are pinned here once and used everywhere:
//!
//! - density = m / (n (n - 1))
//! - edge reciprocity = (# edges whose reverse exists) / m
//! - dyad reciprocity = mutual / (mutual + asymmetric), null dyads excluded
//! - transitivity = 3 * triangles / connected triples, on the undirected
//!   projection (the directed variant is available behind [`Projection`])
//! - degree assortativity = Pearson correlation of endpoint total degrees
//!   over the undirected projection's edge list (both orientations counted)
//! - degree correlation = per-node Pearson correlation of in- vs out-degree
//! - CVs are sample-sd / mean ratios, not percentages
//!
//! Statistics that are undefined on an input (zero variance, no triples, no
//! edges) come back as `None` rather than NaN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TradeNetwork;

/// Which graph the triple-based and endpoint-based statistics run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    /// Collapse each dyad to a single undirected edge (the default).
    #[default]
    Undirected,
    /// Keep edge directions: transitivity over directed 2-paths,
    /// assortativity over (source out-degree, target in-degree) pairs.
    Directed,
}

/// One row of the structural-summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralSummary {
    pub period: i32,
    pub nodes: usize,
    pub edges: usize,
    pub components: usize,
    pub mean_out_degree: f64,
    pub cv_out_degree: Option<f64>,
    pub mean_in_degree: f64,
    pub cv_in_degree: Option<f64>,
    /// Mean edge weight in millions of USD (weights are stored in thousands).
    pub mean_weight: Option<f64>,
    pub cv_weight: Option<f64>,
    pub degree_correlation: Option<f64>,
    pub density: f64,
    pub transitivity: Option<f64>,
    pub edge_reciprocity: Option<f64>,
    pub dyad_reciprocity: Option<f64>,
    pub assortativity: Option<f64>,
    /// Definitional notes for the fields whose naming is ambiguous in common
    /// usage; carried with every summary so downstream tables are explicit.
    /// Flattened in JSON so the emitted object stays flat.
    #[serde(flatten)]
    pub metadata: SummaryMetadata,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryMetadata {
    pub cv_definition: String,
    pub degree_correlation_definition: String,
    pub projection: String,
    pub weight_unit: String,
}

impl SummaryMetadata {
    fn new(projection: Projection) -> Self {
        SummaryMetadata {
            cv_definition: "sample sd / mean (ratio, not percent)".to_string(),
            degree_correlation_definition:
                "Pearson correlation of in-degree vs out-degree across nodes".to_string(),
            projection: match projection {
                Projection::Undirected => "undirected".to_string(),
                Projection::Directed => "directed".to_string(),
            },
            weight_unit: "millions of USD".to_string(),
        }
    }
}

/// Edge density m / (n (n - 1)).
pub fn density(net: &TradeNetwork) -> Result<f64> {
    let n = net.node_count();
    if n < 2 {
        return Err(Error::TooFewNodes {
            required: 2,
            actual: n,
        });
    }
    Ok(net.edge_count() as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// (edge reciprocity, dyad reciprocity); both `None` on an edgeless graph.
pub fn reciprocity(net: &TradeNetwork) -> (Option<f64>, Option<f64>) {
    let m = net.edge_count();
    if m == 0 {
        return (None, None);
    }
    let mut reciprocated = 0usize;
    let mut mutual = 0usize;
    for e in net.edges() {
        if net.has_edge(e.target, e.source) {
            reciprocated += 1;
            if e.source < e.target {
                mutual += 1;
            }
        }
    }
    let asymmetric = m - 2 * mutual;
    let edge_r = reciprocated as f64 / m as f64;
    let dyad_r = mutual as f64 / (mutual + asymmetric) as f64;
    (Some(edge_r), Some(dyad_r))
}

/// Dyad census (mutual, asymmetric, null) over unordered pairs.
pub fn dyad_census(net: &TradeNetwork) -> (usize, usize, usize) {
    let n = net.node_count();
    let mut mutual = 0;
    let mut asymmetric = 0;
    for e in net.edges() {
        if net.has_edge(e.target, e.source) {
            if e.source < e.target {
                mutual += 1;
            }
        } else {
            asymmetric += 1;
        }
    }
    let pairs = n * n.saturating_sub(1) / 2;
    (mutual, asymmetric, pairs - mutual - asymmetric)
}

/// Undirected projection as sorted unique unordered pairs (i < j).
fn undirected_pairs(net: &TradeNetwork) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = net
        .edges()
        .iter()
        .map(|e| {
            if e.source < e.target {
                (e.source, e.target)
            } else {
                (e.target, e.source)
            }
        })
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Global clustering coefficient: 3 * triangles / connected triples.
/// `None` when the graph has no connected triples.
pub fn transitivity(net: &TradeNetwork, projection: Projection) -> Option<f64> {
    match projection {
        Projection::Undirected => transitivity_undirected(net),
        Projection::Directed => transitivity_directed(net),
    }
}

fn transitivity_undirected(net: &TradeNetwork) -> Option<f64> {
    let n = net.node_count();
    let pairs = undirected_pairs(net);
    let mut degree = vec![0usize; n];
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in &pairs {
        degree[i] += 1;
        degree[j] += 1;
        neighbors[i].push(j);
        neighbors[j].push(i);
    }
    let triples: usize = degree.iter().map(|&k| k * k.saturating_sub(1) / 2).sum();
    if triples == 0 {
        return None;
    }
    let adj: std::collections::HashSet<(usize, usize)> = pairs.iter().copied().collect();
    let mut triangles = 0usize;
    for &(i, j) in &pairs {
        // Count common neighbors of i and j above j to hit each triangle once.
        for &k in &neighbors[i] {
            if k > j && adj.contains(&(j, k)) {
                triangles += 1;
            }
        }
    }
    Some(3.0 * triangles as f64 / triples as f64)
}

/// Directed variant: fraction of directed 2-paths i->j->k (i != k) that are
/// closed by the edge i->k.
fn transitivity_directed(net: &TradeNetwork) -> Option<f64> {
    let n = net.node_count();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in net.edges() {
        out[e.source].push(e.target);
    }
    let mut paths = 0usize;
    let mut closed = 0usize;
    for i in 0..n {
        for &j in &out[i] {
            for &k in &out[j] {
                if k == i {
                    continue;
                }
                paths += 1;
                if net.has_edge(i, k) {
                    closed += 1;
                }
            }
        }
    }
    if paths == 0 {
        None
    } else {
        Some(closed as f64 / paths as f64)
    }
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n == 0 {
        return None;
    }
    // Exact zero-variance detection: all values equal.
    if xs.iter().all(|&x| x == xs[0]) || ys.iter().all(|&y| y == ys[0]) {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Newman degree assortativity: Pearson correlation of endpoint degrees over
/// the edge list. `None` on zero degree variance or an edgeless graph.
pub fn assortativity_degree(net: &TradeNetwork, projection: Projection) -> Option<f64> {
    match projection {
        Projection::Undirected => {
            let pairs = undirected_pairs(net);
            if pairs.is_empty() {
                return None;
            }
            let mut degree = vec![0usize; net.node_count()];
            for &(i, j) in &pairs {
                degree[i] += 1;
                degree[j] += 1;
            }
            // Each undirected edge contributes both orientations, which makes
            // the correlation symmetric in the endpoints.
            let mut xs = Vec::with_capacity(2 * pairs.len());
            let mut ys = Vec::with_capacity(2 * pairs.len());
            for &(i, j) in &pairs {
                xs.push(degree[i] as f64);
                ys.push(degree[j] as f64);
                xs.push(degree[j] as f64);
                ys.push(degree[i] as f64);
            }
            pearson(&xs, &ys)
        }
        Projection::Directed => {
            let out = net.out_degrees();
            let inn = net.in_degrees();
            if net.edge_count() == 0 {
                return None;
            }
            let xs: Vec<f64> = net.edges().iter().map(|e| out[e.source] as f64).collect();
            let ys: Vec<f64> = net.edges().iter().map(|e| inn[e.target] as f64).collect();
            pearson(&xs, &ys)
        }
    }
}

/// Pearson correlation across nodes between in-degree and out-degree.
pub fn degree_correlation(net: &TradeNetwork) -> Option<f64> {
    let out: Vec<f64> = net.out_degrees().iter().map(|&d| d as f64).collect();
    let inn: Vec<f64> = net.in_degrees().iter().map(|&d| d as f64).collect();
    pearson(&inn, &out)
}

/// Sample mean; `None` on empty input.
fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Sample standard deviation (n - 1 denominator); `None` for fewer than two
/// observations.
pub(crate) fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() as f64 - 1.0)).sqrt())
}

/// Coefficient of variation sd / mean; `None` when undefined (zero mean or
/// fewer than two observations).
fn cv(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    let sd = sample_sd(xs)?;
    if m == 0.0 {
        None
    } else {
        Some(sd / m)
    }
}

/// Fill the whole structural-statistics row for a network.
pub fn summarize(net: &TradeNetwork, projection: Projection) -> Result<StructuralSummary> {
    let n = net.node_count();
    let density = density(net)?;
    let components = net.weak_components();
    let out: Vec<f64> = net.out_degrees().iter().map(|&d| d as f64).collect();
    let inn: Vec<f64> = net.in_degrees().iter().map(|&d| d as f64).collect();
    // m / n on both margins: the handshake identity makes them equal bit for bit.
    let mean_degree = net.edge_count() as f64 / n as f64;
    let weights_musd: Vec<f64> = net.edges().iter().map(|e| e.weight / 1000.0).collect();
    let (edge_r, dyad_r) = reciprocity(net);

    Ok(StructuralSummary {
        period: net.period(),
        nodes: n,
        edges: net.edge_count(),
        components: components.count,
        mean_out_degree: mean_degree,
        cv_out_degree: cv(&out),
        mean_in_degree: mean_degree,
        cv_in_degree: cv(&inn),
        mean_weight: mean(&weights_musd),
        cv_weight: cv(&weights_musd),
        degree_correlation: degree_correlation(net),
        density,
        transitivity: transitivity(net, projection),
        edge_reciprocity: edge_r,
        dyad_reciprocity: dyad_r,
        assortativity: assortativity_degree(net, projection),
        metadata: SummaryMetadata::new(projection),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TradeNetwork;
    use approx::assert_relative_eq;

    fn net(n: usize, edges: &[(usize, usize)]) -> TradeNetwork {
        let weighted: Vec<(usize, usize, f64)> = edges.iter().map(|&(s, t)| (s, t, 1.0)).collect();
        TradeNetwork::from_index_edges(n, &weighted, 2018).unwrap()
    }

    #[test]
    fn density_of_complete_digraph_is_one() {
        let mut edges = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    edges.push((i, j));
                }
            }
        }
        assert_eq!(density(&net(4, &edges)).unwrap(), 1.0);
    }

    #[test]
    fn density_hand_count() {
        let g = net(3, &[(0, 1), (1, 0), (0, 2)]);
        assert_eq!(density(&g).unwrap(), 0.5);
    }

    #[test]
    fn density_needs_two_nodes() {
        let g = net(1, &[]);
        assert!(density(&g).is_err());
    }

    #[test]
    fn reciprocity_fully_mutual() {
        let g = net(3, &[(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_eq!(reciprocity(&g), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn reciprocity_hand_census() {
        // edges {(1,2),(2,1),(1,3)} from the dyad census: 1 mutual, 1 asymmetric
        let g = net(4, &[(1, 2), (2, 1), (1, 3)]);
        let (edge_r, dyad_r) = reciprocity(&g);
        assert_relative_eq!(edge_r.unwrap(), 2.0 / 3.0);
        assert_relative_eq!(dyad_r.unwrap(), 0.5);
    }

    #[test]
    fn reciprocity_one_directional_star_is_zero() {
        let g = net(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(reciprocity(&g), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn reciprocity_undefined_without_edges() {
        assert_eq!(reciprocity(&net(3, &[])), (None, None));
    }

    #[test]
    fn dyad_census_identity() {
        let g = net(5, &[(0, 1), (1, 0), (2, 3), (1, 2), (4, 0)]);
        let (m, a, nul) = dyad_census(&g);
        assert_eq!(g.edge_count(), 2 * m + a);
        assert_eq!(m + a + nul, 5 * 4 / 2);
    }

    #[test]
    fn transitivity_triangle() {
        let g = net(3, &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(transitivity(&g, Projection::Undirected), Some(1.0));
    }

    #[test]
    fn transitivity_open_path() {
        let g = net(3, &[(0, 1), (1, 2)]);
        assert_eq!(transitivity(&g, Projection::Undirected), Some(0.0));
    }

    #[test]
    fn transitivity_no_triples() {
        let g = net(4, &[(0, 1), (2, 3)]);
        assert_eq!(transitivity(&g, Projection::Undirected), None);
    }

    #[test]
    fn directed_transitivity_feedback_triangle() {
        // 0->1->2->0: each 2-path closes in the undirected sense but the
        // closing chord goes the wrong way, so the directed measure is 0.
        let g = net(3, &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(transitivity(&g, Projection::Directed), Some(0.0));
        // Add the transitive chords and it becomes 1.
        let g = net(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_relative_eq!(transitivity(&g, Projection::Directed).unwrap(), 1.0);
    }

    #[test]
    fn star_assortativity_is_minus_one() {
        let g = net(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_relative_eq!(
            assortativity_degree(&g, Projection::Undirected).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn regular_ring_assortativity_is_undefined() {
        let g = net(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        assert_eq!(assortativity_degree(&g, Projection::Undirected), None);
    }

    #[test]
    fn degree_correlation_perfect_alignment() {
        // 3-cycle: every node has in-degree = out-degree = 1... constant, so
        // undefined. Use a graph with varying but equal margins.
        let g = net(4, &[(0, 1), (1, 0), (0, 2), (2, 0), (0, 3), (3, 0)]);
        // in = out = [3,1,1,1] per node
        assert_relative_eq!(degree_correlation(&g).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degree_correlation_two_node_cases() {
        // in = [0,1], out = [1,0]: anti-aligned, r = -1
        let g = net(2, &[(0, 1)]);
        assert_relative_eq!(degree_correlation(&g).unwrap_or(f64::NAN), -1.0);
        // mutual pair: constant margins -> undefined
        let g = net(2, &[(0, 1), (1, 0)]);
        assert_eq!(degree_correlation(&g), None);
    }

    #[test]
    fn summarize_mean_degrees_match_ratio() {
        let g = net(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (1, 0)]);
        let s = summarize(&g, Projection::Undirected).unwrap();
        assert_eq!(s.mean_out_degree, 5.0 / 4.0);
        assert_eq!(s.mean_in_degree, s.mean_out_degree);
        assert_eq!(s.components, 1);
    }

    #[test]
    fn summarize_edgeless_graph() {
        let g = net(5, &[]);
        let s = summarize(&g, Projection::Undirected).unwrap();
        assert_eq!(s.density, 0.0);
        assert_eq!(s.edge_reciprocity, None);
        assert_eq!(s.dyad_reciprocity, None);
        assert_eq!(s.components, 5);
        assert_eq!(s.mean_weight, None);
        assert_eq!(s.transitivity, None);
    }

    #[test]
    fn summarize_reports_weights_in_millions() {
        let g = TradeNetwork::from_index_edges(3, &[(0, 1, 2000.0), (1, 2, 4000.0)], 2018).unwrap();
        let s = summarize(&g, Projection::Undirected).unwrap();
        assert_relative_eq!(s.mean_weight.unwrap(), 3.0); // (2+4)/2 millions
    }
}
