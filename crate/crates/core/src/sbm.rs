//! Directed Bernoulli stochastic block model fit by variational EM.
//!
//! The variational family is fully factorized: tau is an n x K row-stochastic
//! matrix of class responsibilities. One EM iteration runs a guarded
//! fixed-point e-step (a synchronous mean-field sweep is only accepted if it
//! does not lower the ELBO, so the trace is monotone by construction) and a
//! closed-form m-step. Model selection scans K and scores each fit with ICL.
//!
//! Probabilities are clamped to [1e-10, 1 - 1e-10] before every logarithm;
//! stored parameters stay unclamped so hard fits report exact block
//! densities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TradeNetwork;
use crate::seeding;

/// Clamp bound applied to every probability before a logarithm.
pub const PROB_CLAMP: f64 = 1e-10;
/// A class proportion below this aborts the restart as degenerate.
const DEGENERATE_THETA: f64 = 1e-8;
/// Tolerated ELBO slack: a drop beyond this is a hard error.
const ELBO_SLACK: f64 = 1e-9;

/// Class proportions and the K x K connection-probability matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub theta: Vec<f64>,
    /// connectivity[q][l] = probability of an edge from a class-q node to a
    /// class-l node.
    pub connectivity: Vec<Vec<f64>>,
}

/// Variational responsibilities plus their hard argmax labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Memberships {
    pub tau: Vec<Vec<f64>>,
    pub hard_labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmFit {
    pub k: usize,
    pub params: SbmParams,
    pub memberships: Memberships,
    /// ELBO after every EM iteration of the winning restart (index 0 is the
    /// value at initialization).
    pub elbo_trace: Vec<f64>,
    pub elbo: f64,
    pub icl: f64,
    pub restarts_used: usize,
    pub aborted_restarts: usize,
    pub best_restart: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmOptions {
    pub restarts: usize,
    /// Relative ELBO change below this ends the EM loop.
    pub tol: f64,
    pub max_iter: usize,
    /// Fixed-point sweep controls inside one e-step.
    pub inner_tol: f64,
    pub inner_max: usize,
}

impl Default for SbmOptions {
    fn default() -> Self {
        SbmOptions {
            restarts: 20,
            tol: 1e-6,
            max_iter: 200,
            inner_tol: 1e-6,
            inner_max: 10,
        }
    }
}

fn ln_clamped(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
}

/// x ln x with the 0 ln 0 = 0 convention.
fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.max(PROB_CLAMP).ln()
    } else {
        0.0
    }
}

fn adjacency_matrix(net: &TradeNetwork) -> DMatrix<f64> {
    let n = net.node_count();
    let mut y = DMatrix::zeros(n, n);
    for e in net.edges() {
        y[(e.source, e.target)] = 1.0;
    }
    y
}

fn tau_to_matrix(tau: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if tau.is_empty() || tau[0].is_empty() {
        return Err(Error::InvalidArgument("tau must be non-empty".into()));
    }
    let k = tau[0].len();
    if tau.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("ragged tau rows".into()));
    }
    Ok(DMatrix::from_fn(tau.len(), k, |i, q| tau[i][q]))
}

fn matrix_to_tau(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|q| m[(i, q)]).collect())
        .collect()
}

fn params_to_matrices(params: &SbmParams) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = params.theta.len();
    if params.connectivity.len() != k || params.connectivity.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument(
            "connectivity shape does not match theta".into(),
        ));
    }
    let theta = DVector::from_column_slice(&params.theta);
    let c = DMatrix::from_fn(k, k, |q, l| params.connectivity[q][l]);
    Ok((theta, c))
}

fn matrices_to_params(theta: &DVector<f64>, c: &DMatrix<f64>) -> SbmParams {
    SbmParams {
        theta: theta.iter().copied().collect(),
        connectivity: (0..c.nrows())
            .map(|q| (0..c.ncols()).map(|l| c[(q, l)]).collect())
            .collect(),
    }
}

/// Argmax per row; ties go to the smaller class index.
fn hard_labels(tau: &DMatrix<f64>) -> Vec<usize> {
    (0..tau.nrows())
        .map(|i| {
            let mut best = 0;
            for q in 1..tau.ncols() {
                if tau[(i, q)] > tau[(i, best)] {
                    best = q;
                }
            }
            best
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Core numerics over nalgebra types.
// ---------------------------------------------------------------------------

/// ELBO = sum_q t_q ln theta_q
///      + sum_ql [ A_ql ln C_ql + (t_q t_l - G_ql - A_ql) ln(1 - C_ql) ]
///      - sum_iq tau_iq ln tau_iq
/// with A = tau' Y tau (self-pairs vanish since diag Y = 0) and G = tau' tau
/// removing the i = j pairs from the total-mass product t_q t_l.
fn elbo_engine(
    y: &DMatrix<f64>,
    tau: &DMatrix<f64>,
    theta: &DVector<f64>,
    c: &DMatrix<f64>,
) -> f64 {
    let k = tau.ncols();
    let t = tau.row_sum_tr(); // column sums of tau as a K-vector
    let a = tau.transpose() * y * tau;
    let g = tau.transpose() * tau;

    let mut ll = 0.0;
    for q in 0..k {
        for l in 0..k {
            let pairs = t[q] * t[l] - g[(q, l)];
            ll += a[(q, l)] * ln_clamped(c[(q, l)])
                + (pairs - a[(q, l)]) * ln_clamped(1.0 - c[(q, l)]);
        }
    }
    let prior: f64 = (0..k).map(|q| t[q] * ln_clamped(theta[q])).sum();
    let entropy: f64 = tau.iter().map(|&x| xlnx(x)).sum();
    prior + ll - entropy
}

/// One synchronous mean-field sweep:
/// log tau'_iq = ln theta_q
///             + [Y tau Lc' + (1 t' - tau - Y tau) Lb']_iq        (out-edges)
///             + [Y' tau Lc + (1 t' - tau - Y' tau) Lb]_iq        (in-edges)
/// with Lc = ln C and Lb = ln(1 - C), rows then normalized by log-sum-exp.
fn sweep(
    y: &DMatrix<f64>,
    tau: &DMatrix<f64>,
    log_theta: &DVector<f64>,
    lc: &DMatrix<f64>,
    lb: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = tau.nrows();
    let k = tau.ncols();
    let t = tau.row_sum_tr();

    let yt = y * tau;
    let ytt = y.transpose() * tau;
    // rest_out[i][l] = sum_{j != i, y_ij = 0} tau_jl = t_l - tau_il - yt_il
    let mut rest_out = DMatrix::zeros(n, k);
    let mut rest_in = DMatrix::zeros(n, k);
    for i in 0..n {
        for l in 0..k {
            rest_out[(i, l)] = t[l] - tau[(i, l)] - yt[(i, l)];
            rest_in[(i, l)] = t[l] - tau[(i, l)] - ytt[(i, l)];
        }
    }
    let mut log_tau = &yt * lc.transpose() + rest_out * lb.transpose() + &ytt * lc + rest_in * lb;
    for i in 0..n {
        for q in 0..k {
            log_tau[(i, q)] += log_theta[q];
        }
        // log-sum-exp row normalization
        let row_max = (0..k).fold(f64::NEG_INFINITY, |m, q| m.max(log_tau[(i, q)]));
        let mut z = 0.0;
        for q in 0..k {
            z += (log_tau[(i, q)] - row_max).exp();
        }
        let log_z = row_max + z.ln();
        for q in 0..k {
            log_tau[(i, q)] = (log_tau[(i, q)] - log_z).exp();
        }
    }
    log_tau
}

/// Guarded fixed-point e-step: sweeps are accepted only while the ELBO does
/// not decrease, so the returned tau never scores below the input tau.
fn e_step_engine(
    y: &DMatrix<f64>,
    theta: &DVector<f64>,
    c: &DMatrix<f64>,
    tau_init: &DMatrix<f64>,
    inner_tol: f64,
    inner_max: usize,
) -> (DMatrix<f64>, f64) {
    let log_theta = theta.map(ln_clamped);
    let lc = c.map(ln_clamped);
    let lb = c.map(|p| ln_clamped(1.0 - p));

    let mut best = tau_init.clone();
    let mut best_elbo = elbo_engine(y, &best, theta, c);
    let mut current = tau_init.clone();
    for _ in 0..inner_max {
        let next = sweep(y, &current, &log_theta, &lc, &lb);
        let e = elbo_engine(y, &next, theta, c);
        if e < best_elbo {
            break;
        }
        let delta = (&next - &current).amax();
        best_elbo = e;
        best = next.clone();
        current = next;
        if delta < inner_tol {
            break;
        }
    }
    (best, best_elbo)
}

/// Closed-form maximizers: theta_q = t_q / n and
/// C_ql = sum tau_iq tau_jl y_ij / sum_{i != j} tau_iq tau_jl, with empty
/// denominators falling back to the global density.
fn m_step_engine(y: &DMatrix<f64>, tau: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = tau.nrows();
    let k = tau.ncols();
    let t = tau.row_sum_tr();
    let theta = &t / n as f64;
    let a = tau.transpose() * y * tau;
    let g = tau.transpose() * tau;
    let m: f64 = y.sum();
    let density = m / (n as f64 * (n as f64 - 1.0));
    let c = DMatrix::from_fn(k, k, |q, l| {
        let pairs = t[q] * t[l] - g[(q, l)];
        if pairs > 1e-12 {
            (a[(q, l)] / pairs).clamp(0.0, 1.0)
        } else {
            density
        }
    });
    (theta, c)
}

fn complete_log_likelihood(
    y: &DMatrix<f64>,
    labels: &[usize],
    theta: &DVector<f64>,
    c: &DMatrix<f64>,
) -> f64 {
    let n = labels.len();
    let mut ll: f64 = labels.iter().map(|&z| ln_clamped(theta[z])).sum();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = c[(labels[i], labels[j])];
            ll += if y[(i, j)] > 0.5 {
                ln_clamped(p)
            } else {
                ln_clamped(1.0 - p)
            };
        }
    }
    ll
}

// ---------------------------------------------------------------------------
// Public operations with plain-Vec interfaces.
// ---------------------------------------------------------------------------

fn check_shapes(net: &TradeNetwork, tau: &DMatrix<f64>, params: &SbmParams) -> Result<()> {
    if tau.nrows() != net.node_count() {
        return Err(Error::InvalidArgument(format!(
            "tau has {} rows for {} nodes",
            tau.nrows(),
            net.node_count()
        )));
    }
    if tau.ncols() != params.theta.len() {
        return Err(Error::InvalidArgument(format!(
            "tau has {} classes, theta has {}",
            tau.ncols(),
            params.theta.len()
        )));
    }
    Ok(())
}

/// Evidence lower bound of the factorized variational posterior.
pub fn elbo(net: &TradeNetwork, tau: &[Vec<f64>], params: &SbmParams) -> Result<f64> {
    let tau = tau_to_matrix(tau)?;
    let (theta, c) = params_to_matrices(params)?;
    check_shapes(net, &tau, params)?;
    if tau.iter().any(|x| x.is_nan())
        || theta.iter().any(|x| x.is_nan())
        || c.iter().any(|x| x.is_nan())
    {
        return Err(Error::NanInput("elbo"));
    }
    let y = adjacency_matrix(net);
    Ok(elbo_engine(&y, &tau, &theta, &c))
}

/// Guarded fixed-point e-step from `tau_init` at fixed parameters.
pub fn e_step(
    net: &TradeNetwork,
    params: &SbmParams,
    tau_init: &[Vec<f64>],
    inner_tol: f64,
    inner_max: usize,
) -> Result<Memberships> {
    let tau0 = tau_to_matrix(tau_init)?;
    let (theta, c) = params_to_matrices(params)?;
    check_shapes(net, &tau0, params)?;
    let y = adjacency_matrix(net);
    let (tau, _) = e_step_engine(&y, &theta, &c, &tau0, inner_tol, inner_max);
    Ok(Memberships {
        hard_labels: hard_labels(&tau),
        tau: matrix_to_tau(&tau),
    })
}

/// Closed-form m-step at fixed responsibilities.
pub fn m_step(net: &TradeNetwork, tau: &[Vec<f64>]) -> Result<SbmParams> {
    let tau = tau_to_matrix(tau)?;
    if tau.nrows() != net.node_count() {
        return Err(Error::InvalidArgument(format!(
            "tau has {} rows for {} nodes",
            tau.nrows(),
            net.node_count()
        )));
    }
    let y = adjacency_matrix(net);
    let (theta, c) = m_step_engine(&y, &tau);
    Ok(matrices_to_params(&theta, &c))
}

// ---------------------------------------------------------------------------
// Initialization.
// ---------------------------------------------------------------------------

/// Lloyd k-means over matrix rows; returns (labels, within-cluster SSE).
fn kmeans_once(
    points: &DMatrix<f64>,
    k: usize,
    rng: &mut rand_chacha::ChaCha20Rng,
) -> (Vec<usize>, f64) {
    let n = points.nrows();
    let d = points.ncols();
    let start: Vec<usize> = rand::seq::index::sample(rng, n, k).into_iter().collect();
    let mut centers = DMatrix::zeros(k, d);
    for (c, &row) in start.iter().enumerate() {
        centers.set_row(c, &points.row(row));
    }

    let dist2 = |i: usize, centers: &DMatrix<f64>, c: usize| -> f64 {
        let mut s = 0.0;
        for col in 0..d {
            let diff = points[(i, col)] - centers[(c, col)];
            s += diff * diff;
        }
        s
    };

    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = dist2(i, &centers, 0);
            for c in 1..k {
                let dc = dist2(i, &centers, c);
                if dc < best_d {
                    best = c;
                    best_d = dc;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        // Re-seed any empty cluster to the point farthest from its center.
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(a, &centers, labels[a])
                            .partial_cmp(&dist2(b, &centers, labels[b]))
                            .unwrap()
                    })
                    .unwrap();
                centers.set_row(c, &points.row(far));
                labels[far] = c;
                counts[c] = 1;
                changed = true;
            }
        }
        let mut next = DMatrix::zeros(k, d);
        for i in 0..n {
            for col in 0..d {
                next[(labels[i], col)] += points[(i, col)];
            }
        }
        for c in 0..k {
            for col in 0..d {
                next[(c, col)] /= counts[c] as f64;
            }
        }
        centers = next;
        if !changed {
            break;
        }
    }
    let sse: f64 = (0..n).map(|i| dist2(i, &centers, labels[i])).sum();
    (labels, sse)
}

/// Soft memberships from spectral clustering: k-means (best of 10 runs) on
/// the top-K left singular vectors of the grand-mean-centered adjacency.
fn spectral_init(y: &DMatrix<f64>, k: usize, seed: u64) -> DMatrix<f64> {
    let n = y.nrows();
    let mean = y.sum() / (n * n) as f64;
    let centered = y.map(|v| v - mean);
    let svd = centered.svd(true, false);
    let u = svd.u.expect("u requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let mut points = DMatrix::zeros(n, k);
    for (col, &sv_idx) in order.iter().take(k).enumerate() {
        for i in 0..n {
            points[(i, col)] = u[(i, sv_idx)];
        }
    }

    let mut best: Option<(Vec<usize>, f64)> = None;
    for run in 0..10 {
        let mut rng = seeding::rng(seed, "sbm.kmeans", run);
        let (labels, sse) = kmeans_once(&points, k, &mut rng);
        if best.as_ref().is_none_or(|(_, b)| sse < *b) {
            best = Some((labels, sse));
        }
    }
    let (labels, _) = best.expect("at least one k-means run");

    soften(&labels, n, k)
}

/// Hard labels to soft responsibilities: 0.9 on the label, rest spread.
fn soften(labels: &[usize], n: usize, k: usize) -> DMatrix<f64> {
    let off = 0.1 / (k as f64 - 1.0);
    DMatrix::from_fn(n, k, |i, q| if labels[i] == q { 0.9 } else { off })
}

/// Row-normalized unit-exponential draws: Dirichlet(1, ..., 1) rows.
fn random_init(n: usize, k: usize, rng: &mut rand_chacha::ChaCha20Rng) -> DMatrix<f64> {
    let mut tau = DMatrix::zeros(n, k);
    for i in 0..n {
        let mut row_sum = 0.0;
        for q in 0..k {
            let u: f64 = rng.random();
            let e = -(1.0 - u).ln();
            tau[(i, q)] = e;
            row_sum += e;
        }
        for q in 0..k {
            tau[(i, q)] /= row_sum;
        }
    }
    tau
}

// ---------------------------------------------------------------------------
// Fitting.
// ---------------------------------------------------------------------------

enum RestartOutcome {
    Done {
        tau: DMatrix<f64>,
        theta: DVector<f64>,
        c: DMatrix<f64>,
        trace: Vec<f64>,
    },
    Degenerate,
}

fn run_restart(
    y: &DMatrix<f64>,
    tau_init: DMatrix<f64>,
    options: &SbmOptions,
) -> Result<RestartOutcome> {
    let mut tau = tau_init;
    let (mut theta, mut c) = m_step_engine(y, &tau);
    let mut prev = elbo_engine(y, &tau, &theta, &c);
    let mut trace = vec![prev];
    for iteration in 1..=options.max_iter {
        let (next_tau, _) =
            e_step_engine(y, &theta, &c, &tau, options.inner_tol, options.inner_max);
        tau = next_tau;
        let (next_theta, next_c) = m_step_engine(y, &tau);
        theta = next_theta;
        c = next_c;
        if theta.iter().any(|&t| t < DEGENERATE_THETA) {
            return Ok(RestartOutcome::Degenerate);
        }
        let e = elbo_engine(y, &tau, &theta, &c);
        trace.push(e);
        if e < prev - ELBO_SLACK {
            return Err(Error::ElboDecreased {
                iteration,
                drop: prev - e,
            });
        }
        let rel = (e - prev).abs() / prev.abs().max(1.0);
        prev = e;
        if rel < options.tol {
            break;
        }
    }
    Ok(RestartOutcome::Done {
        tau,
        theta,
        c,
        trace,
    })
}

/// Canonical class order: descending size, ties by smallest member index,
/// then by original class index (total order even with empty classes).
fn canonical_permutation(labels: &[usize], k: usize) -> Vec<usize> {
    let n = labels.len();
    let mut size = vec![0usize; k];
    let mut first = vec![n; k];
    for (i, &l) in labels.iter().enumerate() {
        size[l] += 1;
        if first[l] == n {
            first[l] = i;
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        size[b]
            .cmp(&size[a])
            .then(first[a].cmp(&first[b]))
            .then(a.cmp(&b))
    });
    order
}

/// Fit one class count with multiple restarts; restart 0 is spectral
/// (for K >= 2), the rest are random soft initializations. The best restart
/// by final ELBO wins, ties going to the smaller restart index.
pub fn fit(net: &TradeNetwork, k: usize, seed: u64, options: &SbmOptions) -> Result<SbmFit> {
    let n = net.node_count();
    if k == 0 || k >= n {
        return Err(Error::InvalidClassCount { k, n });
    }
    if options.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let y = adjacency_matrix(net);

    // K = 1 is deterministic: tau is forced to the all-ones column.
    let restarts = if k == 1 { 1 } else { options.restarts };
    let outcomes: Result<Vec<RestartOutcome>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let tau0 = if k == 1 {
                DMatrix::from_element(n, 1, 1.0)
            } else if r == 0 {
                spectral_init(&y, k, seed)
            } else {
                let mut rng = seeding::rng(seed, "sbm.restart", r as u64);
                random_init(n, k, &mut rng)
            };
            run_restart(&y, tau0, options)
        })
        .collect();
    let outcomes = outcomes?;

    let mut best: Option<(
        usize,
        &DMatrix<f64>,
        &DVector<f64>,
        &DMatrix<f64>,
        &Vec<f64>,
    )> = None;
    let mut aborted = 0usize;
    for (r, outcome) in outcomes.iter().enumerate() {
        match outcome {
            RestartOutcome::Degenerate => aborted += 1,
            RestartOutcome::Done {
                tau,
                theta,
                c,
                trace,
            } => {
                let e = *trace.last().expect("non-empty trace");
                if best
                    .as_ref()
                    .is_none_or(|(_, _, _, _, bt)| e > *bt.last().expect("non-empty trace"))
                {
                    best = Some((r, tau, theta, c, trace));
                }
            }
        }
    }
    let Some((best_restart, tau, theta, c, trace)) = best else {
        return Err(Error::DegenerateClasses { k, restarts });
    };

    // Canonicalize: permute classes, then relabel.
    let raw_labels = hard_labels(tau);
    let order = canonical_permutation(&raw_labels, k);
    let mut new_class = vec![0usize; k];
    for (new, &old) in order.iter().enumerate() {
        new_class[old] = new;
    }
    let tau_c = DMatrix::from_fn(n, k, |i, q| tau[(i, order[q])]);
    let theta_c = DVector::from_fn(k, |q, _| theta[order[q]]);
    let c_c = DMatrix::from_fn(k, k, |q, l| c[(order[q], order[l])]);
    let labels_c: Vec<usize> = raw_labels.iter().map(|&l| new_class[l]).collect();

    let icl_value = {
        let ll = complete_log_likelihood(&y, &labels_c, &theta_c, &c_c);
        let nf = n as f64;
        let kf = k as f64;
        ll - (kf * kf / 2.0) * (nf * (nf - 1.0)).ln() - ((kf - 1.0) / 2.0) * nf.ln()
    };

    Ok(SbmFit {
        k,
        params: matrices_to_params(&theta_c, &c_c),
        memberships: Memberships {
            tau: matrix_to_tau(&tau_c),
            hard_labels: labels_c,
        },
        elbo_trace: trace.clone(),
        elbo: *trace.last().expect("non-empty trace"),
        icl: icl_value,
        restarts_used: restarts - aborted,
        aborted_restarts: aborted,
        best_restart,
    })
}

/// ICL score of an existing fit against a network.
pub fn icl(net: &TradeNetwork, fit: &SbmFit) -> Result<f64> {
    let (theta, c) = params_to_matrices(&fit.params)?;
    if fit.memberships.hard_labels.len() != net.node_count() {
        return Err(Error::InvalidArgument(
            "fit and network sizes differ".into(),
        ));
    }
    let y = adjacency_matrix(net);
    let n = net.node_count() as f64;
    let k = fit.k as f64;
    let ll = complete_log_likelihood(&y, &fit.memberships.hard_labels, &theta, &c);
    Ok(ll - (k * k / 2.0) * (n * (n - 1.0)).ln() - ((k - 1.0) / 2.0) * n.ln())
}

/// One scanned class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclPoint {
    pub k: usize,
    pub icl: f64,
    pub elbo: f64,
}

/// Result of scanning a K range: every fit is kept so the caller can apply
/// its own override (for instance an interpretability cap) to the curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSelection {
    pub fits: Vec<SbmFit>,
    pub recommended_k: usize,
}

impl ClassSelection {
    pub fn curve(&self) -> Vec<IclPoint> {
        self.fits
            .iter()
            .map(|f| IclPoint {
                k: f.k,
                icl: f.icl,
                elbo: f.elbo,
            })
            .collect()
    }

    pub fn recommended(&self) -> &SbmFit {
        self.fits
            .iter()
            .find(|f| f.k == self.recommended_k)
            .expect("recommended_k comes from fits")
    }
}

/// Fit every K in the range and recommend the ICL argmax (ties to smaller K).
/// Each K runs under a derived sub-seed, so scans are independent of range
/// order and extent.
pub fn select_classes(
    net: &TradeNetwork,
    k_range: &[usize],
    seed: u64,
    options: &SbmOptions,
) -> Result<ClassSelection> {
    if k_range.is_empty() {
        return Err(Error::InvalidArgument("empty K range".into()));
    }
    let fits: Result<Vec<SbmFit>> = k_range
        .par_iter()
        .map(|&k| {
            fit(
                net,
                k,
                seeding::derive_master(seed, "sbm.select", k as u64),
                options,
            )
        })
        .collect();
    let fits = fits?;
    let mut best = 0usize;
    for i in 1..fits.len() {
        let better = fits[i].icl > fits[best].icl
            || (fits[i].icl == fits[best].icl && fits[i].k < fits[best].k);
        if better {
            best = i;
        }
    }
    Ok(ClassSelection {
        recommended_k: fits[best].k,
        fits,
    })
}

/// Node order for the block-structured adjacency view: by class, then by
/// descending out-strength, then by index.
pub fn ordered_adjacency(net: &TradeNetwork, fit: &SbmFit) -> Result<Vec<usize>> {
    let n = net.node_count();
    if fit.memberships.hard_labels.len() != n {
        return Err(Error::InvalidArgument(
            "fit and network sizes differ".into(),
        ));
    }
    let strength = net.out_strengths();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        fit.memberships.hard_labels[a]
            .cmp(&fit.memberships.hard_labels[b])
            .then(strength[b].partial_cmp(&strength[a]).unwrap())
            .then(a.cmp(&b))
    });
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::planted_partition;
    use approx::assert_relative_eq;

    fn uniform_tau(n: usize, k: usize) -> Vec<Vec<f64>> {
        vec![vec![1.0 / k as f64; k]; n]
    }

    fn hard_tau(labels: &[usize], k: usize) -> Vec<Vec<f64>> {
        labels
            .iter()
            .map(|&l| (0..k).map(|q| if q == l { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    fn toy_net() -> TradeNetwork {
        TradeNetwork::from_index_edges(
            4,
            &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (0, 2, 1.0)],
            2018,
        )
        .unwrap()
    }

    #[test]
    fn elbo_single_class_closed_form() {
        let net = toy_net();
        let n = 4.0;
        let m = 4.0;
        let rho = m / (n * (n - 1.0));
        let params = SbmParams {
            theta: vec![1.0],
            connectivity: vec![vec![rho]],
        };
        let tau = uniform_tau(4, 1);
        let expected = m * rho.ln() + (n * (n - 1.0) - m) * (1.0 - rho).ln();
        assert_relative_eq!(elbo(&net, &tau, &params).unwrap(), expected, epsilon = 1e-9);
    }

    #[test]
    fn elbo_hard_labels_equals_complete_likelihood() {
        let net = toy_net();
        let labels = vec![0, 0, 1, 1];
        let tau = hard_tau(&labels, 2);
        let params = SbmParams {
            theta: vec![0.5, 0.5],
            connectivity: vec![vec![0.9, 0.2], vec![0.1, 0.6]],
        };
        // Hand evaluation: entropy vanishes at hard tau, so ELBO must equal
        // log p(Y | Z, C) + log p(Z | theta).
        let y = adjacency_matrix(&net);
        let (theta, c) = params_to_matrices(&params).unwrap();
        let direct = complete_log_likelihood(&y, &labels, &theta, &c);
        assert_relative_eq!(elbo(&net, &tau, &params).unwrap(), direct, epsilon = 1e-9);
    }

    #[test]
    fn elbo_rejects_nan() {
        let net = toy_net();
        let mut tau = uniform_tau(4, 1);
        tau[2][0] = f64::NAN;
        let params = SbmParams {
            theta: vec![1.0],
            connectivity: vec![vec![0.5]],
        };
        assert!(matches!(elbo(&net, &tau, &params), Err(Error::NanInput(_))));
    }

    #[test]
    fn e_step_single_class_is_forced() {
        let net = toy_net();
        let params = SbmParams {
            theta: vec![1.0],
            connectivity: vec![vec![0.3]],
        };
        let m = e_step(&net, &params, &uniform_tau(4, 1), 1e-8, 20).unwrap();
        for row in &m.tau {
            assert_relative_eq!(row[0], 1.0);
        }
    }

    #[test]
    fn e_step_recovers_planted_blocks_from_true_params() {
        let (net, truth) = planted_partition(40, 2, 0.8, 0.05, 99);
        let params = SbmParams {
            theta: vec![0.5, 0.5],
            connectivity: vec![vec![0.8, 0.05], vec![0.05, 0.8]],
        };
        // Slightly informative start, biased toward the planted labels.
        let tau0: Vec<Vec<f64>> = truth
            .iter()
            .map(|&l| {
                if l == 0 {
                    vec![0.6, 0.4]
                } else {
                    vec![0.4, 0.6]
                }
            })
            .collect();
        let m = e_step(&net, &params, &tau0, 1e-8, 50).unwrap();
        assert_eq!(m.hard_labels, truth);
        for (row, &l) in m.tau.iter().zip(&truth) {
            assert!(row[l] > 0.99, "row {row:?} label {l}");
        }
    }

    #[test]
    fn e_step_never_lowers_elbo() {
        let (net, _) = planted_partition(30, 3, 0.5, 0.1, 5);
        let params = SbmParams {
            theta: vec![0.4, 0.3, 0.3],
            connectivity: vec![
                vec![0.5, 0.1, 0.1],
                vec![0.1, 0.5, 0.1],
                vec![0.1, 0.1, 0.5],
            ],
        };
        let tau0 = uniform_tau(30, 3);
        let before = elbo(&net, &tau0, &params).unwrap();
        let m = e_step(&net, &params, &tau0, 1e-8, 25).unwrap();
        let after = elbo(&net, &m.tau, &params).unwrap();
        assert!(after >= before - 1e-9, "before {before} after {after}");
    }

    #[test]
    fn m_step_hard_tau_counts_block_densities() {
        let net = toy_net();
        let labels = vec![0, 0, 1, 1];
        let params = m_step(&net, &hard_tau(&labels, 2)).unwrap();
        assert_eq!(params.theta, vec![0.5, 0.5]);
        // Block (0,0): ordered pairs (0,1),(1,0) -> 2 edges of 2 pairs.
        assert_relative_eq!(params.connectivity[0][0], 1.0);
        // Block (0,1): pairs (0,2),(0,3),(1,2),(1,3) -> 1 edge.
        assert_relative_eq!(params.connectivity[0][1], 0.25);
        assert_relative_eq!(params.connectivity[1][0], 0.0);
        // Block (1,1): pairs (2,3),(3,2) -> 1 edge.
        assert_relative_eq!(params.connectivity[1][1], 0.5);
    }

    #[test]
    fn m_step_single_class_is_density() {
        let net = toy_net();
        let params = m_step(&net, &uniform_tau(4, 1)).unwrap();
        assert_relative_eq!(params.theta[0], 1.0);
        assert_relative_eq!(params.connectivity[0][0], 4.0 / 12.0, epsilon = 1e-12);
    }

    #[test]
    fn m_step_matches_weighted_count_oracle() {
        let (net, _) = planted_partition(5, 2, 0.6, 0.3, 17);
        let tau = vec![
            vec![0.9, 0.1],
            vec![0.2, 0.8],
            vec![0.5, 0.5],
            vec![0.7, 0.3],
            vec![0.1, 0.9],
        ];
        let params = m_step(&net, &tau).unwrap();
        // Brute-force weighted sums over ordered pairs.
        for q in 0..2 {
            let tq: f64 = tau.iter().map(|r| r[q]).sum();
            assert_relative_eq!(params.theta[q], tq / 5.0, epsilon = 1e-12);
            for l in 0..2 {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..5 {
                    for j in 0..5 {
                        if i == j {
                            continue;
                        }
                        let w = tau[i][q] * tau[j][l];
                        den += w;
                        if net.has_edge(i, j) {
                            num += w;
                        }
                    }
                }
                assert_relative_eq!(params.connectivity[q][l], num / den, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fit_k1_is_deterministic_density() {
        let net = toy_net();
        let f = fit(&net, 1, 123, &SbmOptions::default()).unwrap();
        assert_eq!(f.k, 1);
        assert_relative_eq!(f.params.connectivity[0][0], 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(f.memberships.hard_labels, vec![0, 0, 0, 0]);
        let g = fit(&net, 1, 456, &SbmOptions::default()).unwrap();
        assert_eq!(f.params, g.params); // seed-independent for K = 1
    }

    #[test]
    fn fit_is_deterministic_for_fixed_seed() {
        let (net, _) = planted_partition(30, 2, 0.6, 0.1, 7);
        let opts = SbmOptions {
            restarts: 5,
            ..SbmOptions::default()
        };
        let a = fit(&net, 2, 42, &opts).unwrap();
        let b = fit(&net, 2, 42, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fit_recovers_two_planted_blocks() {
        let (net, truth) = planted_partition(40, 2, 0.6, 0.05, 11);
        let opts = SbmOptions {
            restarts: 5,
            ..SbmOptions::default()
        };
        let f = fit(&net, 2, 3, &opts).unwrap();
        // Either labeling of the two classes may come out; compare both.
        let direct: usize = f
            .memberships
            .hard_labels
            .iter()
            .zip(&truth)
            .filter(|(a, b)| a == b)
            .count();
        let agreement = direct.max(40 - direct);
        assert!(agreement >= 38, "agreement {agreement}/40");
    }

    #[test]
    fn fit_rejects_bad_class_counts() {
        let net = toy_net();
        assert!(matches!(
            fit(&net, 0, 0, &SbmOptions::default()),
            Err(Error::InvalidClassCount { .. })
        ));
        assert!(matches!(
            fit(&net, 4, 0, &SbmOptions::default()),
            Err(Error::InvalidClassCount { .. })
        ));
    }

    #[test]
    fn elbo_trace_is_monotone() {
        let (net, _) = planted_partition(36, 3, 0.5, 0.08, 21);
        let f = fit(
            &net,
            3,
            9,
            &SbmOptions {
                restarts: 4,
                ..SbmOptions::default()
            },
        )
        .unwrap();
        for w in f.elbo_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "trace drop: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn canonical_labels_sort_by_size() {
        // Uneven planted blocks: nodes 0..8 dense among themselves, 8..32
        // dense among themselves, sparse across. Class 0 must come out as
        // the 24-node block regardless of which block the best restart
        // happened to call "0" internally.
        let mut rng = seeding::rng(0xB10C, "test.uneven", 0);
        let block = |i: usize| usize::from(i >= 8);
        let mut edges = Vec::new();
        for i in 0..32 {
            for j in 0..32 {
                if i == j {
                    continue;
                }
                let p = if block(i) == block(j) { 0.7 } else { 0.03 };
                if rng.random::<f64>() < p {
                    edges.push((i, j, 1.0));
                }
            }
        }
        let net = TradeNetwork::from_index_edges(32, &edges, 2018).unwrap();
        let f = fit(
            &net,
            2,
            13,
            &SbmOptions {
                restarts: 4,
                ..SbmOptions::default()
            },
        )
        .unwrap();
        let counts: Vec<usize> = (0..2)
            .map(|q| {
                f.memberships
                    .hard_labels
                    .iter()
                    .filter(|&&l| l == q)
                    .count()
            })
            .collect();
        assert_eq!(counts, vec![24, 8]);
        assert_eq!(f.memberships.hard_labels[9], 0);
        assert_eq!(f.memberships.hard_labels[0], 1);
    }

    #[test]
    fn relabeling_nodes_preserves_canonical_fit() {
        let (net, _) = planted_partition(24, 2, 0.7, 0.05, 41);
        // Reverse the node order.
        let n = net.node_count();
        let edges: Vec<(usize, usize, f64)> = net
            .edges()
            .iter()
            .map(|e| (n - 1 - e.source, n - 1 - e.target, e.weight))
            .collect();
        let reversed = TradeNetwork::from_index_edges(n, &edges, 2018).unwrap();
        let opts = SbmOptions {
            restarts: 6,
            ..SbmOptions::default()
        };
        let a = fit(&net, 2, 5, &opts).unwrap();
        let b = fit(&reversed, 2, 5, &opts).unwrap();
        let mut sizes_a: Vec<usize> = (0..2)
            .map(|q| {
                a.memberships
                    .hard_labels
                    .iter()
                    .filter(|&&l| l == q)
                    .count()
            })
            .collect();
        let mut sizes_b: Vec<usize> = (0..2)
            .map(|q| {
                b.memberships
                    .hard_labels
                    .iter()
                    .filter(|&&l| l == q)
                    .count()
            })
            .collect();
        sizes_a.sort_unstable();
        sizes_b.sort_unstable();
        assert_eq!(sizes_a, sizes_b);
        assert_relative_eq!(a.icl, b.icl, epsilon = 1e-6);
    }

    #[test]
    fn icl_k1_closed_form() {
        let net = toy_net();
        let f = fit(&net, 1, 0, &SbmOptions::default()).unwrap();
        let n = 4.0_f64;
        let m = 4.0_f64;
        let rho = m / (n * (n - 1.0));
        let ll = m * rho.ln() + (n * (n - 1.0) - m) * (1.0 - rho).ln();
        let expected = ll - 0.5 * (n * (n - 1.0)).ln();
        assert_relative_eq!(f.icl, expected, epsilon = 1e-9);
        assert_relative_eq!(icl(&net, &f).unwrap(), expected, epsilon = 1e-9);
    }

    #[test]
    fn select_classes_singleton_range() {
        let net = toy_net();
        let sel = select_classes(&net, &[1], 3, &SbmOptions::default()).unwrap();
        assert_eq!(sel.recommended_k, 1);
        assert_eq!(sel.curve().len(), 1);
    }

    #[test]
    fn select_classes_finds_planted_count() {
        let (net, _) = planted_partition(60, 3, 0.45, 0.05, 77);
        let opts = SbmOptions {
            restarts: 6,
            ..SbmOptions::default()
        };
        let sel = select_classes(&net, &[1, 2, 3, 4], 123, &opts).unwrap();
        assert_eq!(sel.recommended_k, 3);
        assert_eq!(sel.curve().len(), 4);
        assert_eq!(sel.recommended().k, 3);
    }

    #[test]
    fn ordered_adjacency_sorts_by_class_then_strength() {
        let net = TradeNetwork::from_index_edges(
            4,
            &[(0, 1, 5.0), (1, 0, 20.0), (2, 3, 9.0), (3, 2, 1.0)],
            2018,
        )
        .unwrap();
        let fit = SbmFit {
            k: 2,
            params: SbmParams {
                theta: vec![0.5, 0.5],
                connectivity: vec![vec![0.5, 0.0], vec![0.0, 0.5]],
            },
            memberships: Memberships {
                tau: vec![
                    vec![1.0, 0.0],
                    vec![1.0, 0.0],
                    vec![0.0, 1.0],
                    vec![0.0, 1.0],
                ],
                hard_labels: vec![0, 0, 1, 1],
            },
            elbo_trace: vec![0.0],
            elbo: 0.0,
            icl: 0.0,
            restarts_used: 1,
            aborted_restarts: 0,
            best_restart: 0,
        };
        let order = ordered_adjacency(&net, &fit).unwrap();
        assert_eq!(order, vec![1, 0, 2, 3]);
    }

    #[test]
    fn ordered_adjacency_k1_sorts_by_strength() {
        let net =
            TradeNetwork::from_index_edges(3, &[(0, 1, 1.0), (1, 2, 50.0), (2, 0, 10.0)], 2018)
                .unwrap();
        let f = fit(&net, 1, 0, &SbmOptions::default()).unwrap();
        let order = ordered_adjacency(&net, &f).unwrap();
        assert_eq!(order, vec![1, 2, 0]);
    }
}
