//! Metropolis single-edge-toggle sampler and goodness-of-fit diagnostics.
//!
//! Each step proposes one uniformly random ordered dyad and toggles it with
//! probability min(1, exp(theta dot delta-g)). For dyad-independent terms the
//! change-statistic vector of a dyad is constant, so it is precomputed once;
//! the proposal chain is then O(p) per step.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TradeNetwork;
use crate::ingest::AttributeTable;
use crate::netstats;
use crate::seeding;

use super::{change_statistic, ErgmModel};

/// Sum of each term's statistic over the present edges: g(y).
pub fn model_statistics(
    model: &ErgmModel,
    net: &TradeNetwork,
    attrs: &AttributeTable,
) -> Result<Vec<f64>> {
    let attrs = attrs.aligned_to(net)?;
    let mut g = vec![0.0; model.terms.len()];
    for e in net.edges() {
        for (h, t) in model.terms.iter().enumerate() {
            g[h] += change_statistic(t, &attrs, e.source, e.target)?;
        }
    }
    Ok(g)
}

/// Markov chain over directed graphs targeting the ERGM distribution.
pub struct EdgeToggleSampler {
    n: usize,
    theta: Vec<f64>,
    /// Per ordered dyad (lexicographic), the change-statistic vector.
    change: Vec<Vec<f64>>,
    state: Vec<bool>,
    rng: ChaCha20Rng,
    nodes: Vec<String>,
    period: i32,
}

/// Lexicographic index of the ordered dyad (i, j), j skipping i.
fn dyad_index(n: usize, i: usize, j: usize) -> usize {
    i * (n - 1) + if j < i { j } else { j - 1 }
}

impl EdgeToggleSampler {
    /// Start the chain at the template's edge set.
    pub fn new(
        model: &ErgmModel,
        theta: &[f64],
        template: &TradeNetwork,
        attrs: &AttributeTable,
        rng: ChaCha20Rng,
    ) -> Result<Self> {
        if theta.len() != model.terms.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for {} terms",
                theta.len(),
                model.terms.len()
            )));
        }
        let n = template.node_count();
        if n < 2 {
            return Err(Error::TooFewNodes {
                required: 2,
                actual: n,
            });
        }
        let attrs = attrs.aligned_to(template)?;
        let mut change = Vec::with_capacity(n * (n - 1));
        let mut state = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let row: Result<Vec<f64>> = model
                    .terms
                    .iter()
                    .map(|t| change_statistic(t, &attrs, i, j))
                    .collect();
                change.push(row?);
                state.push(template.has_edge(i, j));
            }
        }
        Ok(EdgeToggleSampler {
            n,
            theta: theta.to_vec(),
            change,
            state,
            rng,
            nodes: template.nodes().to_vec(),
            period: template.period(),
        })
    }

    /// One Metropolis proposal; returns whether the toggle was accepted.
    pub fn step(&mut self) -> bool {
        let d = self.rng.random_range(0..self.state.len());
        let sign = if self.state[d] { -1.0 } else { 1.0 };
        let log_ratio: f64 = self
            .theta
            .iter()
            .zip(&self.change[d])
            .map(|(t, g)| t * g * sign)
            .sum();
        let u: f64 = self.rng.random();
        if u < log_ratio.exp().min(1.0) {
            self.state[d] = !self.state[d];
            true
        } else {
            false
        }
    }

    pub fn run(&mut self, steps: usize) {
        for _ in 0..steps {
            self.step();
        }
    }

    pub fn edge_present(&self, i: usize, j: usize) -> bool {
        self.state[dyad_index(self.n, i, j)]
    }

    /// Current state as a bitmask over dyad indices; only for n(n-1) <= 64.
    pub fn graph_code(&self) -> u64 {
        assert!(self.state.len() <= 64, "graph_code needs n(n-1) <= 64");
        self.state
            .iter()
            .enumerate()
            .fold(0u64, |acc, (d, &on)| acc | ((on as u64) << d))
    }

    /// Materialize the current state; sampled edges carry weight 1.
    pub fn network(&self) -> TradeNetwork {
        let mut edges = Vec::new();
        let mut d = 0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i == j {
                    continue;
                }
                if self.state[d] {
                    edges.push((i, j, 1.0));
                }
                d += 1;
            }
        }
        TradeNetwork::with_nodes(self.nodes.clone(), &edges, self.period)
            .expect("sampler state is always a simple digraph")
    }
}

/// Run the chain for `steps` from the template and return the final state.
pub fn simulate(
    model: &ErgmModel,
    theta: &[f64],
    template: &TradeNetwork,
    attrs: &AttributeTable,
    steps: usize,
    seed: u64,
) -> Result<TradeNetwork> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let rng = seeding::rng(seed, "ergm.sim", 0);
    let mut sampler = EdgeToggleSampler::new(model, theta, template, attrs, rng)?;
    sampler.run(steps);
    Ok(sampler.network())
}

/// Observed-vs-simulated comparison for one statistic. Fields are `None`
/// where the quantity is undefined (degenerate graph, no defined replicates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofStatistic {
    pub name: String,
    pub observed: Option<f64>,
    pub sim_mean: Option<f64>,
    pub sim_sd: Option<f64>,
    pub q025: Option<f64>,
    pub q500: Option<f64>,
    pub q975: Option<f64>,
    /// Fraction of replicates with value <= observed.
    pub observed_quantile: Option<f64>,
    /// Replicates where the statistic was defined.
    pub sim_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub replicates: usize,
    pub steps: usize,
    pub statistics: Vec<GofStatistic>,
}

/// Linear-interpolation quantile of a sorted sample.
fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

fn summarize_stat(name: &str, observed: Option<f64>, sims: &[Option<f64>]) -> GofStatistic {
    let mut defined: Vec<f64> = sims.iter().flatten().copied().collect();
    defined.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let used = defined.len();
    let mean = if used == 0 {
        None
    } else {
        Some(defined.iter().sum::<f64>() / used as f64)
    };
    let observed_quantile = observed.and_then(|obs| {
        if used == 0 {
            return None;
        }
        let below = defined.iter().filter(|&&v| v <= obs).count();
        Some(below as f64 / used as f64)
    });
    GofStatistic {
        name: name.to_string(),
        observed,
        sim_mean: mean,
        sim_sd: netstats::sample_sd(&defined),
        q025: quantile(&defined, 0.025),
        q500: quantile(&defined, 0.5),
        q975: quantile(&defined, 0.975),
        observed_quantile,
        sim_used: used,
    }
}

/// Simulate at the fitted coefficients and compare model statistics plus
/// density, edge reciprocity, and transitivity against the observed network.
///
/// `steps = None` uses 20 sweeps (20 n(n-1) proposals) per replicate.
/// Replicates carry derived seeds, so the report is deterministic.
pub fn goodness_of_fit(
    model: &ErgmModel,
    theta: &[f64],
    net: &TradeNetwork,
    attrs: &AttributeTable,
    replicates: usize,
    steps: Option<usize>,
    seed: u64,
) -> Result<GofReport> {
    if replicates == 0 {
        return Err(Error::InvalidArgument(
            "replicates must be at least 1".into(),
        ));
    }
    let n = net.node_count();
    let steps = steps.unwrap_or(20 * n * (n - 1));

    let observed_g = model_statistics(model, net, attrs)?;
    let observed_density = netstats::density(net)?;
    let (observed_er, _) = netstats::reciprocity(net);
    let observed_trans = netstats::transitivity(net, netstats::Projection::Undirected);

    struct RepStats {
        g: Vec<f64>,
        density: f64,
        edge_reciprocity: Option<f64>,
        transitivity: Option<f64>,
    }

    let reps: Result<Vec<RepStats>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rng = seeding::rng(seed, "ergm.gof", r as u64);
            let mut sampler = EdgeToggleSampler::new(model, theta, net, attrs, rng)?;
            sampler.run(steps);
            let sim = sampler.network();
            let g = model_statistics(model, &sim, attrs)?;
            let (er, _) = netstats::reciprocity(&sim);
            Ok(RepStats {
                g,
                density: netstats::density(&sim)?,
                edge_reciprocity: er,
                transitivity: netstats::transitivity(&sim, netstats::Projection::Undirected),
            })
        })
        .collect();
    let reps = reps?;

    let mut statistics = Vec::new();
    for (h, name) in model.term_names().iter().enumerate() {
        let sims: Vec<Option<f64>> = reps.iter().map(|r| Some(r.g[h])).collect();
        statistics.push(summarize_stat(name, Some(observed_g[h]), &sims));
    }
    statistics.push(summarize_stat(
        "density",
        Some(observed_density),
        &reps.iter().map(|r| Some(r.density)).collect::<Vec<_>>(),
    ));
    statistics.push(summarize_stat(
        "edge_reciprocity",
        observed_er,
        &reps.iter().map(|r| r.edge_reciprocity).collect::<Vec<_>>(),
    ));
    statistics.push(summarize_stat(
        "transitivity",
        observed_trans,
        &reps.iter().map(|r| r.transitivity).collect::<Vec<_>>(),
    ));

    Ok(GofReport {
        replicates,
        steps,
        statistics,
    })
}
