use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

use super::ks::marginal_ks_pvalues;
use super::nig::{NigDensity, NigParams};

pub const DEFAULT_EM_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1000;
/// Allowed decrease of the log-likelihood between iterations.
pub const LOGLIK_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Log-likelihood at the start value and after each iteration.
    pub loglik_trace: Vec<f64>,
    pub n_iter: usize,
    /// Relative change fell below the tolerance and no step decreased the
    /// log-likelihood by more than [`LOGLIK_SLACK`].
    pub converged: bool,
    pub ks_pvalues: Vec<f64>,
}

impl FitDiagnostics {
    pub fn is_monotone(&self) -> bool {
        self.loglik_trace.windows(2).all(|w| w[1] >= w[0] - LOGLIK_SLACK)
    }
}

fn rows(samples: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..samples.nrows())
        .map(|i| samples.row(i).iter().copied().collect())
        .collect()
}

fn map_rows<T: Send, F: Fn(&[f64]) -> T + Sync>(xs: &[Vec<f64>], f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        xs.par_iter().map(|x| f(x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        xs.iter().map(|x| f(x)).collect()
    }
}

fn loglik_rows(density: &NigDensity, xs: &[Vec<f64>]) -> f64 {
    map_rows(xs, |x| density.log_density(x)).iter().sum()
}

/// Sum of log densities of the rows of `samples`.
pub fn log_likelihood(params: &NigParams, samples: &DMatrix<f64>) -> f64 {
    loglik_rows(&params.density(), &rows(samples))
}

/// `(mean E[W|x], mean E[1/W|x], per-row E[W|x], per-row E[1/W|x])`.
fn e_step(params: &NigParams, xs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let density = params.density();
    let moments = map_rows(xs, |x| density.mixing_posterior_moments(x));
    let (eta, delta): (Vec<f64>, Vec<f64>) = moments.into_iter().unzip();
    if eta.iter().chain(delta.iter()).any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Numerical(
            "non-finite conditional mixing moment in E-step".into(),
        ));
    }
    Ok((eta, delta))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Location, skew and dispersion maximizing the expected complete-data
/// likelihood for fixed conditional moments.
fn update_location(
    x: &DMatrix<f64>,
    xbar: &DVector<f64>,
    eta: &[f64],
    delta: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
    let (n, d) = x.shape();
    let nf = n as f64;
    let (eta_bar, delta_bar) = (mean(eta), mean(delta));
    let denom = delta_bar * eta_bar - 1.0;
    if !(denom > 0.0) {
        return Err(Error::Numerical(format!(
            "degenerate mixing moments: mean E[W|x] * mean E[1/W|x] - 1 = {denom:e}"
        )));
    }
    let mut gamma = DVector::zeros(d);
    for i in 0..n {
        for k in 0..d {
            gamma[k] += delta[i] * (xbar[k] - x[(i, k)]);
        }
    }
    gamma /= nf * denom;
    let mu = xbar - &gamma * eta_bar;
    let mut sigma = DMatrix::zeros(d, d);
    let mut diff = DVector::zeros(d);
    for i in 0..n {
        for k in 0..d {
            diff[k] = x[(i, k)] - mu[k];
        }
        sigma.ger(delta[i] / nf, &diff, &diff, 1.0);
    }
    sigma.ger(-eta_bar, &gamma, &gamma, 1.0);
    let sigma = linalg::symmetrize(&sigma);
    linalg::cholesky(&sigma, "weighted dispersion matrix in EM").map_err(|_| {
        Error::Singular(format!(
            "weighted dispersion matrix in EM is not positive definite (min eigenvalue {:e})",
            linalg::min_eigenvalue(&sigma)
        ))
    })?;
    Ok((mu, sigma, gamma))
}

/// Fits a multivariate NIG law to the rows of `samples` by MCECM.
///
/// Each iteration updates `(mu, Sigma, gamma)` from the current conditional
/// moments of the mixing variable, recomputes them, and then sets `(chi, psi)`
/// to the inverse-Gaussian maximizer `chi = eta/(delta eta - 1)`,
/// `psi = chi/eta^2`. The result is rescaled so that `E[W] = 1`
/// (`chi = psi`), which leaves the law unchanged.
pub fn fit_em(samples: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<(NigParams, FitDiagnostics)> {
    let (n, d) = samples.shape();
    if d == 0 {
        return Err(Error::invalid("samples have no columns"));
    }
    if n < 10 * d {
        return Err(Error::invalid(format!(
            "EM needs at least {} samples for dimension {d}, got {n}",
            10 * d
        )));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::invalid("EM tolerance must be positive and max_iter at least 1"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("EM samples must be finite"));
    }
    let xbar = linalg::column_means(samples);
    let cov = linalg::sample_covariance(samples);
    if linalg::cholesky(&cov, "sample covariance").is_err() {
        let constant: Vec<usize> = (0..d).filter(|&k| cov[(k, k)] <= 0.0).collect();
        return Err(Error::Singular(format!(
            "sample covariance is singular (constant columns {constant:?}, min eigenvalue {:e})",
            linalg::min_eigenvalue(&cov)
        )));
    }
    let xs = rows(samples);
    let mut params = NigParams::new(1.0, 1.0, xbar.clone(), cov, DVector::zeros(d))?;
    let mut trace = vec![loglik_rows(&params.density(), &xs)];
    let mut monotone = true;
    let mut converged = false;
    let mut n_iter = 0;
    while n_iter < max_iter {
        n_iter += 1;
        let (eta, delta) = e_step(&params, &xs)?;
        let (mu, sigma, gamma) = update_location(samples, &xbar, &eta, &delta)?;
        let interim = NigParams::new(params.chi(), params.psi(), mu, sigma, gamma)?;
        let (eta, delta) = e_step(&interim, &xs)?;
        let (eta_bar, delta_bar) = (mean(&eta), mean(&delta));
        let denom = delta_bar * eta_bar - 1.0;
        if !(denom > 0.0) {
            return Err(Error::Numerical(format!(
                "degenerate mixing moments in chi/psi step ({denom:e})"
            )));
        }
        let chi = eta_bar / denom;
        let psi = chi / (eta_bar * eta_bar);
        let c = (psi / chi).sqrt();
        let scale = (chi * psi).sqrt();
        params = NigParams::new(
            scale,
            scale,
            interim.mu().clone(),
            interim.sigma() / c,
            interim.gamma() / c,
        )?;
        let ll = loglik_rows(&params.density(), &xs);
        if !ll.is_finite() {
            return Err(Error::Numerical("log-likelihood is not finite".into()));
        }
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(ll);
        if ll < prev - LOGLIK_SLACK {
            monotone = false;
            log::warn!("EM log-likelihood decreased by {:e} at iteration {n_iter}", prev - ll);
        }
        if (ll - prev).abs() <= tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let ks_pvalues = marginal_ks_pvalues(samples, &params)?;
    Ok((
        params,
        FitDiagnostics {
            loglik_trace: trace,
            n_iter,
            converged: converged && monotone,
            ks_pvalues,
        },
    ))
}
