//! Metropolis-Hastings search over variable-inclusion indicators.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::bayes::{log_marginal_from_stats, PriorBuilder, RegressionStats};
use crate::error::{Error, Result};

/// Prior inclusion weights `w_k`; forced factors carry `w_k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionPrior {
    w: Vec<f64>,
    forced: Vec<bool>,
}

impl InclusionPrior {
    pub fn new(w: Vec<f64>, forced: &[usize]) -> Result<Self> {
        if let Some(bad) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("inclusion weight {bad} outside [0, 1]")));
        }
        let mut flags = vec![false; w.len()];
        let mut w = w;
        for &k in forced {
            if k >= w.len() {
                return Err(Error::invalid(format!("forced index {k} out of range")));
            }
            flags[k] = true;
            w[k] = 1.0;
        }
        Ok(Self { w, forced: flags })
    }

    /// Weight `theta` on every factor except the forced ones.
    pub fn uniform(d: usize, theta: f64, forced: &[usize]) -> Result<Self> {
        Self::new(vec![theta; d], forced)
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn is_forced(&self, k: usize) -> bool {
        self.forced[k]
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// `p(M) = prod_k w_k^{gamma_k} (1 - w_k)^{1 - gamma_k}`; zero when a forced factor is excluded.
pub fn prior_model_prob(gamma: &[bool], prior: &InclusionPrior) -> Result<f64> {
    Ok(log_prior_model_prob(gamma, prior)?.exp())
}

pub fn log_prior_model_prob(gamma: &[bool], prior: &InclusionPrior) -> Result<f64> {
    if gamma.len() != prior.len() {
        return Err(Error::DimensionMismatch {
            expected: prior.len(),
            actual: gamma.len(),
            context: "model indicator vs inclusion prior",
        });
    }
    let mut s = 0.0;
    for (k, &g) in gamma.iter().enumerate() {
        if prior.forced[k] && !g {
            return Ok(f64::NEG_INFINITY);
        }
        let w = prior.w[k];
        s += if g { w.ln() } else { (1.0 - w).ln() };
    }
    Ok(s)
}

/// Inclusion weight `theta = E[S] / d` giving an expected model size of `target_size`.
pub fn expected_size_weight(target_size: f64, d: usize) -> Result<f64> {
    if d == 0 || !(target_size > 0.0) || target_size > d as f64 {
        return Err(Error::invalid(format!(
            "target model size {target_size} must lie in (0, {d}]"
        )));
    }
    Ok(target_size / d as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipResult {
    pub pip: Vec<f64>,
    /// Median-probability model: `pip > 1/2`.
    pub selected: Vec<bool>,
    pub n_models_visited: usize,
    pub acceptance_rate: f64,
    /// Proposals were made but none was accepted.
    pub stuck: bool,
}

impl PipResult {
    pub fn selected_indices(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&k| self.selected[k]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
}

impl McmcConfig {
    /// `n_iter` iterations with the first 20% discarded.
    pub fn with_iterations(n_iter: usize) -> Self {
        Self {
            n_iter,
            burn_in: n_iter / 5,
        }
    }
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self::with_iterations(50_000)
    }
}

fn mask(gamma: &[bool]) -> u64 {
    gamma
        .iter()
        .enumerate()
        .fold(0u64, |m, (k, &g)| if g { m | (1 << k) } else { m })
}

/// Memoised log marginal likelihoods keyed by the inclusion bitmask.
struct ModelScores<'a> {
    stats: RegressionStats,
    builder: &'a dyn PriorBuilder,
    cache: HashMap<u64, f64>,
}

impl<'a> ModelScores<'a> {
    fn score(&mut self, gamma: &[bool]) -> f64 {
        let key = mask(gamma);
        if let Some(&v) = self.cache.get(&key) {
            return v;
        }
        let cols: Vec<usize> = (0..gamma.len()).filter(|&k| gamma[k]).collect();
        let sub = self.stats.subset(&cols);
        // failed models are excluded from moves
        let v = self
            .builder
            .build(&sub.xtx, sub.n)
            .and_then(|prior| log_marginal_from_stats(&prior, &sub))
            .unwrap_or(f64::NEG_INFINITY);
        self.cache.insert(key, v);
        v
    }
}

/// Single-flip Metropolis-Hastings over model indicators.
///
/// Each iteration picks one non-forced coordinate uniformly and proposes to
/// flip it; the move is accepted with probability
/// `min(1, p(y|M') p(M') / (p(y|M) p(M)))`. PIPs are visit frequencies after
/// burn-in. Coordinates with weight 0 or 1 cannot move and are not proposed.
pub fn mcmc_model_search<R: Rng + ?Sized>(
    x_full: &DMatrix<f64>,
    y: &DVector<f64>,
    prior: &InclusionPrior,
    builder: &dyn PriorBuilder,
    config: McmcConfig,
    rng: &mut R,
) -> Result<PipResult> {
    let d = x_full.ncols();
    if prior.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: prior.len(),
            context: "inclusion prior vs factors",
        });
    }
    if d > 64 {
        return Err(Error::invalid("at most 64 candidate factors are supported"));
    }
    if config.n_iter <= config.burn_in {
        return Err(Error::invalid("n_iter must exceed burn_in"));
    }
    let mut scores = ModelScores {
        stats: RegressionStats::new(x_full, y)?,
        builder,
        cache: HashMap::new(),
    };

    let w = prior.weights();
    let mut gamma: Vec<bool> = w.iter().map(|&v| v >= 1.0).collect();
    let movable: Vec<usize> = (0..d).filter(|&k| w[k] > 0.0 && w[k] < 1.0).collect();

    let mut current = scores.score(&gamma) + log_prior_model_prob(&gamma, prior)?;
    let mut counts = vec![0usize; d];
    let mut accepted = 0usize;
    let mut proposals = 0usize;
    let kept = config.n_iter - config.burn_in;

    for it in 0..config.n_iter {
        if !movable.is_empty() {
            let k = movable[rng.gen_range(0..movable.len())];
            gamma[k] = !gamma[k];
            let proposed = scores.score(&gamma) + log_prior_model_prob(&gamma, prior)?;
            proposals += 1;
            let log_ratio = proposed - current;
            let accept =
                proposed.is_finite() && (log_ratio >= 0.0 || !current.is_finite() || rng.gen::<f64>().ln() < log_ratio);
            if accept {
                current = proposed;
                accepted += 1;
            } else {
                gamma[k] = !gamma[k];
            }
        }
        if it >= config.burn_in {
            for (c, &g) in counts.iter_mut().zip(&gamma) {
                if g {
                    *c += 1;
                }
            }
        }
    }

    let pip: Vec<f64> = counts.iter().map(|&c| c as f64 / kept as f64).collect();
    let selected = pip.iter().map(|&p| p > 0.5).collect();
    Ok(PipResult {
        pip,
        selected,
        n_models_visited: scores.cache.values().filter(|v| v.is_finite()).count(),
        acceptance_rate: if proposals > 0 {
            accepted as f64 / proposals as f64
        } else {
            0.0
        },
        stuck: proposals > 0 && accepted == 0,
    })
}
