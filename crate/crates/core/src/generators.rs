//! Random digraph generators for benchmarks and calibration tests.

use rand::Rng;

use crate::graph::TradeNetwork;
use crate::seeding;

/// Directed G(n, p): each ordered pair (i, j), i != j, carries an edge with
/// probability `p`, weight 1.
pub fn gnp_digraph(n: usize, p: f64, seed: u64) -> TradeNetwork {
    let mut rng = seeding::rng(seed, "gen.gnp", 0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    TradeNetwork::from_index_edges(n, &edges, 0).expect("generated edges are valid")
}

/// Directed G(n, p) with log-uniform weights in `[w_min, w_max]`.
pub fn weighted_gnp_digraph(n: usize, p: f64, w_min: f64, w_max: f64, seed: u64) -> TradeNetwork {
    assert!(w_min > 0.0 && w_max >= w_min);
    let mut rng = seeding::rng(seed, "gen.weighted_gnp", 0);
    let (lo, hi) = (w_min.ln(), w_max.ln());
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < p {
                let w = (lo + (hi - lo) * rng.random::<f64>()).exp();
                edges.push((i, j, w));
            }
        }
    }
    TradeNetwork::from_index_edges(n, &edges, 0).expect("generated edges are valid")
}

/// Planted-partition digraph: `n` nodes split into `k` near-equal blocks;
/// within-block dyads carry an edge with probability `p_in`, between-block
/// dyads with `p_out`. Returns the network and the planted block labels.
pub fn planted_partition(
    n: usize,
    k: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> (TradeNetwork, Vec<usize>) {
    assert!(k >= 1 && k <= n);
    let labels: Vec<usize> = (0..n).map(|i| i * k / n).collect();
    let mut rng = seeding::rng(seed, "gen.planted", 0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    let net = TradeNetwork::from_index_edges(n, &edges, 0).expect("generated edges are valid");
    (net, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gnp_is_reproducible() {
        let a = gnp_digraph(12, 0.3, 99);
        let b = gnp_digraph(12, 0.3, 99);
        assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn gnp_density_is_plausible() {
        let net = gnp_digraph(60, 0.25, 7);
        let density = net.edge_count() as f64 / (60.0 * 59.0);
        assert!((density - 0.25).abs() < 0.05, "density {density}");
    }

    #[test]
    fn planted_blocks_are_near_equal() {
        let (_, labels) = planted_partition(120, 3, 0.3, 0.05, 1);
        let mut sizes = [0usize; 3];
        for &l in &labels {
            sizes[l] += 1;
        }
        assert_eq!(sizes, [40, 40, 40]);
    }
}
