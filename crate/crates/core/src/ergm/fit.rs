//! Maximum pseudo-likelihood estimation via iteratively reweighted least
//! squares.
//!
//! All in-scope terms are dyad-independent, so the pseudo-likelihood being
//! maximized is the exact likelihood of independent Bernoulli dyads and the
//! reported standard errors are the usual logistic-regression ones.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TradeNetwork;
use crate::ingest::AttributeTable;

use super::{design_matrix, DyadTable, ErgmModel};

/// Estimation controls; the defaults are the documented contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence: max absolute score component below this.
    pub tol: f64,
    pub max_iter: usize,
    /// A coefficient magnitude past this bound is treated as separation.
    pub separation_bound: f64,
    /// Scale covariate columns to unit standard deviation for conditioning;
    /// estimates and standard errors are reported back in original units.
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 50,
            separation_bound: 50.0,
            standardize: false,
        }
    }
}

/// One fitted coefficient row: estimate, standard error, z, p, stars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermFit {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub p_value: f64,
    pub significance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgmFit {
    pub terms: Vec<TermFit>,
    pub log_pseudo_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Two-sided significance code: strict thresholds at 0.1, 0.05, 0.01, 0.001.
pub fn significance_code(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        ""
    }
}

/// Two-sided p-value of a standard-normal z statistic.
fn normal_p_two_sided(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// ln(1 + e^eta) without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 35.0 {
        eta
    } else if eta < -35.0 {
        eta.exp()
    } else {
        eta.exp().ln_1p()
    }
}

fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// Columns whose residual after projecting on the previous columns is below
/// this relative tolerance are reported as collinear.
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let p = x.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut collinear = Vec::new();
    for c in 0..p {
        let col = DVector::from_column_slice(x.column(c).as_slice());
        let original = col.norm();
        if original == 0.0 {
            collinear.push(names[c].clone());
            continue;
        }
        let mut residual = col;
        for b in &basis {
            let coeff = b.dot(&residual);
            residual -= b * coeff;
        }
        if residual.norm() <= 1e-10 * original {
            collinear.push(names[c].clone());
        } else {
            let norm = residual.norm();
            basis.push(residual / norm);
        }
    }
    collinear
}

fn build_matrices(d: &DyadTable) -> (DMatrix<f64>, DVector<f64>) {
    let rows = d.x.len();
    let p = d.term_names.len();
    let x = DMatrix::from_fn(rows, p, |r, c| d.x[r][c]);
    let y = DVector::from_fn(rows, |r, _| d.y[r]);
    (x, y)
}

/// Fit by IRLS from a zero start.
///
/// Convergence is max |score| < tol; non-convergence, rank deficiency, and
/// separation (a coefficient running past the bound) are hard errors.
pub fn fit_mple(
    model: &ErgmModel,
    net: &TradeNetwork,
    attrs: &AttributeTable,
    options: &FitOptions,
) -> Result<ErgmFit> {
    let d = design_matrix(model, net, attrs)?;
    fit_dyad_table(&d, options)
}

/// Estimation core over a prepared dyad table (shared with tests).
pub(crate) fn fit_dyad_table(d: &DyadTable, options: &FitOptions) -> Result<ErgmFit> {
    let names = d.term_names.clone();
    let (mut x, y) = build_matrices(d);

    let bad = collinear_columns(&x, &names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient(bad.join(", ")));
    }

    // Scale-only standardization: dividing a column by its sd rescales the
    // coefficient by the same factor; no centering, so the intercept role of
    // `edges` is untouched and back-transform is exact.
    let rows = x.nrows();
    let p = x.ncols();
    let mut scales = vec![1.0; p];
    if options.standardize {
        for c in 0..p {
            let col: Vec<f64> = x.column(c).iter().copied().collect();
            if let Some(sd) = crate::netstats::sample_sd(&col) {
                if sd > 0.0 {
                    scales[c] = sd;
                }
            }
        }
        for c in 0..p {
            if scales[c] != 1.0 {
                for r in 0..rows {
                    x[(r, c)] /= scales[c];
                }
            }
        }
    }

    let mut beta = DVector::zeros(p);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iter {
        let eta = &x * &beta;
        let mu = eta.map(logistic);
        let score = x.transpose() * (&y - &mu);
        if score.amax() < options.tol {
            converged = true;
            break;
        }
        let w = mu.map(|m| m * (1.0 - m));
        // info = X^T W X with W diagonal
        let mut xw = x.clone();
        for r in 0..rows {
            let wr = w[r];
            for c in 0..p {
                xw[(r, c)] *= wr;
            }
        }
        let information = x.transpose() * xw;
        let chol = Cholesky::new(information).ok_or_else(|| {
            Error::RankDeficient("observed information is not positive definite".into())
        })?;
        let delta = chol.solve(&score);
        beta += delta;
        iterations += 1;

        for c in 0..p {
            // The bound applies to the working (scaled) coefficient; under
            // separation that is the one diverging.
            if beta[c].abs() > options.separation_bound {
                return Err(Error::Separation {
                    term: names[c].clone(),
                    bound: options.separation_bound,
                });
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(options.max_iter));
    }

    // Observed information at the solution (the loop may have converged
    // before touching `information` when beta = 0 is already optimal).
    let eta = &x * &beta;
    let mu = eta.map(logistic);
    let w = mu.map(|m| m * (1.0 - m));
    let mut xw = x.clone();
    for r in 0..rows {
        let wr = w[r];
        for c in 0..p {
            xw[(r, c)] *= wr;
        }
    }
    let information = x.transpose() * xw;
    let chol = Cholesky::new(information).ok_or_else(|| {
        Error::RankDeficient("observed information is not positive definite".into())
    })?;
    let covariance = chol.inverse();

    let log_pl: f64 = (0..rows).map(|r| y[r] * eta[r] - softplus(eta[r])).sum();

    let terms = (0..p)
        .map(|c| {
            let estimate = beta[c] / scales[c];
            let std_error = covariance[(c, c)].sqrt() / scales[c];
            let z_value = estimate / std_error;
            let p_value = normal_p_two_sided(z_value);
            TermFit {
                name: names[c].clone(),
                estimate,
                std_error,
                z_value,
                p_value,
                significance: significance_code(p_value).to_string(),
            }
        })
        .collect();

    Ok(ErgmFit {
        terms,
        log_pseudo_likelihood: log_pl,
        iterations,
        converged,
    })
}
