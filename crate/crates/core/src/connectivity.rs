//! Connectivity under minimum-flow thresholds.
//!
//! The profile keeps every edge with weight >= the threshold (closed
//! comparison), recomputes weak components, and tracks the giant component.
//! A threshold of 0 therefore keeps all edges, including structural
//! zero-weight ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TradeNetwork;

/// How dyad weights are read before thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowBasis {
    /// Raw directed weights as ingested.
    #[default]
    Gross,
    /// Net exports: weight(i, j) becomes max(w_ij - w_ji, 0); dyads that
    /// net out to zero (or reverse) lose the edge entirely.
    Net,
}

/// One row of a connectivity profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub edges: usize,
    pub components: usize,
    pub giant_size: usize,
    pub giant_fraction: f64,
    pub isolates: usize,
}

/// Materialize the flow basis as a concrete network (identity for gross).
pub fn apply_basis(net: &TradeNetwork, basis: FlowBasis) -> Result<TradeNetwork> {
    match basis {
        FlowBasis::Gross => Ok(net.clone()),
        FlowBasis::Net => {
            let mut kept: Vec<(usize, usize, f64)> = Vec::new();
            for e in net.edges() {
                let reverse = net.weight(e.target, e.source).unwrap_or(0.0);
                let net_flow = e.weight - reverse;
                if net_flow > 0.0 {
                    kept.push((e.source, e.target, net_flow));
                }
            }
            TradeNetwork::with_nodes(net.nodes().to_vec(), &kept, net.period())
        }
    }
}

/// Sweep the grid and report the component structure at every threshold.
///
/// The grid must be non-empty and sorted in strictly increasing order.
pub fn threshold_profile(
    net: &TradeNetwork,
    grid: &[f64],
    basis: FlowBasis,
) -> Result<Vec<ThresholdPoint>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for (i, w) in grid.windows(2).enumerate() {
        if !(w[0] < w[1]) {
            return Err(Error::UnsortedGrid(i + 1));
        }
    }
    if grid.iter().any(|w| !w.is_finite()) {
        return Err(Error::NanInput("threshold grid"));
    }
    let base = apply_basis(net, basis)?;
    let n = base.node_count();
    let mut profile = Vec::with_capacity(grid.len());
    for &w_min in grid {
        let sub = base.threshold_subgraph(w_min);
        let comps = sub.weak_components();
        let degrees_out = sub.out_degrees();
        let degrees_in = sub.in_degrees();
        let isolates = (0..n)
            .filter(|&i| degrees_out[i] == 0 && degrees_in[i] == 0)
            .count();
        profile.push(ThresholdPoint {
            threshold: w_min,
            edges: sub.edge_count(),
            components: comps.count,
            giant_size: comps.giant_size,
            giant_fraction: comps.giant_size as f64 / n as f64,
            isolates,
        });
    }
    Ok(profile)
}

/// Default sweep grid: 0 followed by `points` log-spaced values from the
/// smallest positive weight to the largest weight.
///
/// Needs at least one strictly positive weight to anchor the log scale.
pub fn default_grid(net: &TradeNetwork, points: usize) -> Result<Vec<f64>> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for e in net.edges() {
        if e.weight > 0.0 {
            lo = lo.min(e.weight);
            hi = hi.max(e.weight);
        }
    }
    if !lo.is_finite() {
        return Err(Error::NoPositiveWeight);
    }
    let mut grid = vec![0.0];
    if points == 0 {
        return Ok(grid);
    }
    if lo == hi {
        grid.push(lo);
        return Ok(grid);
    }
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    for i in 0..points {
        let t = i as f64 / (points as f64 - 1.0).max(1.0);
        let w = (ln_lo + t * (ln_hi - ln_lo)).exp();
        grid.push(w);
    }
    // Exponentiation can land two grid points on the same float; a strictly
    // increasing grid is part of the contract, so dedup here.
    grid.dedup();
    Ok(grid)
}

/// First threshold at which the giant component falls below its size at the
/// first grid point. `None` when the profile has fewer than two points or the
/// giant never shrinks.
pub fn inflection_threshold(profile: &[ThresholdPoint]) -> Option<f64> {
    if profile.len() < 2 {
        return None;
    }
    let reference = profile[0].giant_size;
    profile[1..]
        .iter()
        .find(|p| p.giant_size < reference)
        .map(|p| p.threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TradeNetwork;

    fn wnet(n: usize, edges: &[(usize, usize, f64)]) -> TradeNetwork {
        TradeNetwork::from_index_edges(n, edges, 2018).unwrap()
    }

    #[test]
    fn profile_zero_threshold_keeps_everything() {
        let g = wnet(4, &[(0, 1, 0.0), (1, 2, 5.0), (2, 3, 10.0)]);
        let p = threshold_profile(&g, &[0.0], FlowBasis::Gross).unwrap();
        assert_eq!(p[0].edges, 3);
        assert_eq!(p[0].giant_size, 4);
        assert_eq!(p[0].components, 1);
        assert_eq!(p[0].isolates, 0);
    }

    #[test]
    fn profile_closed_threshold_semantics() {
        let g = wnet(4, &[(0, 1, 5.0), (1, 2, 10.0), (2, 3, 20.0)]);
        let p = threshold_profile(&g, &[5.0, 10.0, 10.5, 25.0], FlowBasis::Gross).unwrap();
        assert_eq!(p[0].edges, 3); // w >= 5 keeps the 5.0 edge
        assert_eq!(p[1].edges, 2);
        assert_eq!(p[2].edges, 1);
        assert_eq!(p[3].edges, 0);
        assert_eq!(p[3].giant_size, 1);
        assert_eq!(p[3].isolates, 4);
    }

    #[test]
    fn profile_rejects_bad_grids() {
        let g = wnet(2, &[(0, 1, 1.0)]);
        assert!(matches!(
            threshold_profile(&g, &[], FlowBasis::Gross),
            Err(Error::EmptyGrid)
        ));
        assert!(matches!(
            threshold_profile(&g, &[1.0, 1.0], FlowBasis::Gross),
            Err(Error::UnsortedGrid(1))
        ));
        assert!(matches!(
            threshold_profile(&g, &[2.0, 1.0], FlowBasis::Gross),
            Err(Error::UnsortedGrid(1))
        ));
    }

    #[test]
    fn net_basis_cancels_balanced_dyads() {
        let g = wnet(3, &[(0, 1, 10.0), (1, 0, 4.0), (1, 2, 7.0), (2, 1, 7.0)]);
        let p = threshold_profile(&g, &[0.0, 6.5], FlowBasis::Net).unwrap();
        // Net flows: 0->1 carries 6, the balanced 1<->2 dyad disappears.
        assert_eq!(p[0].edges, 1);
        assert_eq!(p[0].giant_size, 2);
        assert_eq!(p[1].edges, 0);
    }

    #[test]
    fn default_grid_prefixes_zero_and_spans_weights() {
        let g = wnet(3, &[(0, 1, 2.0), (1, 2, 200.0)]);
        let grid = default_grid(&g, 5).unwrap();
        assert_eq!(grid[0], 0.0);
        assert_eq!(grid.len(), 6);
        assert!((grid[1] - 2.0).abs() < 1e-12);
        assert!((grid[5] - 200.0).abs() < 1e-9);
        for w in grid.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn default_grid_needs_positive_weight() {
        let g = wnet(3, &[(0, 1, 0.0)]);
        assert!(matches!(default_grid(&g, 5), Err(Error::NoPositiveWeight)));
    }

    #[test]
    fn default_grid_single_weight_collapses() {
        let g = wnet(3, &[(0, 1, 7.0), (1, 2, 7.0)]);
        assert_eq!(default_grid(&g, 10).unwrap(), vec![0.0, 7.0]);
    }

    #[test]
    fn inflection_detects_first_drop() {
        let g = wnet(
            5,
            &[(0, 1, 1.0), (1, 2, 10.0), (2, 3, 100.0), (3, 4, 1000.0)],
        );
        let profile = threshold_profile(&g, &[0.0, 5.0, 50.0], FlowBasis::Gross).unwrap();
        assert_eq!(profile[0].giant_size, 5);
        assert_eq!(profile[1].giant_size, 4);
        assert_eq!(inflection_threshold(&profile), Some(5.0));
    }

    #[test]
    fn inflection_none_when_giant_stable() {
        let g = wnet(3, &[(0, 1, 10.0), (1, 2, 10.0)]);
        let profile = threshold_profile(&g, &[0.0, 1.0, 9.0], FlowBasis::Gross).unwrap();
        assert_eq!(inflection_threshold(&profile), None);
        assert_eq!(inflection_threshold(&profile[..1]), None);
    }
}
