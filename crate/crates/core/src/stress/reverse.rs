use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::hdr::{hdr_threshold_log, HdRegion};
use super::portfolio::{portfolio_variance, var_from_variance, PortfolioSpec};
use crate::corrmodel::{valid_model_correlation, Coefficient, CorrelationParams, FactorAssignment};
use crate::distfit::{sample_nig, NigDensity, NigParams};
use crate::error::{Error, Result};
use crate::rng::{self, stage};

pub const DEFAULT_Q: f64 = 0.05;
pub const DEFAULT_ALPHA: f64 = 0.99;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

/// Spread below which a coefficient is treated as constant over the history.
const CONSTANT_SPREAD: f64 = 1e-12;

/// Maps full coefficient vectors `(eta, lambda, nu)` to the coordinates that
/// vary over a history, and back.
///
/// Coefficients that never move (a dropped constant, factors nobody is
/// exposed to) are held at their common value so the fitted distribution
/// stays non-degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub n_factors: usize,
    pub active: Vec<usize>,
    pub fixed: Vec<(usize, f64)>,
    pub eta_omitted: bool,
}

impl ParamLayout {
    pub fn from_history(history: &[CorrelationParams]) -> Result<Self> {
        let first = history
            .first()
            .ok_or_else(|| Error::invalid("coefficient history is empty"))?;
        let d = first.n_factors();
        if let Some(p) = history.iter().find(|p| p.n_factors() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: p.n_factors(),
                context: "factors across history",
            });
        }
        let vectors: Vec<Vec<f64>> = history.iter().map(|p| p.to_vector()).collect();
        let mut active = Vec::new();
        let mut fixed = Vec::new();
        for k in 0..2 * d + 1 {
            let (lo, hi) = vectors.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v[k]), hi.max(v[k]))
            });
            if hi - lo > CONSTANT_SPREAD {
                active.push(k);
            } else {
                fixed.push((k, vectors[0][k]));
            }
        }
        if active.is_empty() {
            return Err(Error::invalid("no coefficient varies over the history"));
        }
        Ok(Self {
            n_factors: d,
            active,
            fixed,
            eta_omitted: history.iter().all(|p| p.eta.is_none()),
        })
    }

    pub fn dim(&self) -> usize {
        self.active.len()
    }

    fn coefficient(&self, k: usize) -> Coefficient {
        let d = self.n_factors;
        match k {
            0 => Coefficient::Eta,
            k if k <= d => Coefficient::Inter(k - 1),
            k => Coefficient::Intra(k - 1 - d),
        }
    }

    /// Names of the active coordinates.
    pub fn labels(&self, factor_names: &[String]) -> Vec<String> {
        self.active
            .iter()
            .map(|&k| self.coefficient(k).name(factor_names))
            .collect()
    }

    pub fn project(&self, params: &CorrelationParams) -> Result<Vec<f64>> {
        if params.n_factors() != self.n_factors {
            return Err(Error::DimensionMismatch {
                expected: self.n_factors,
                actual: params.n_factors(),
                context: "params vs layout",
            });
        }
        let v = params.to_vector();
        Ok(self.active.iter().map(|&k| v[k]).collect())
    }

    /// Rows of active coordinates, one per history entry.
    pub fn history_matrix(&self, history: &[CorrelationParams]) -> Result<DMatrix<f64>> {
        let rows = history.iter().map(|p| self.project(p)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(rows.len(), self.dim(), |i, j| rows[i][j]))
    }

    pub fn embed(&self, x: &[f64]) -> Result<CorrelationParams> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
                context: "active coordinates",
            });
        }
        let mut v = vec![0.0; 2 * self.n_factors + 1];
        for (&k, &value) in self.active.iter().zip(x) {
            v[k] = value;
        }
        for &(k, value) in &self.fixed {
            v[k] = value;
        }
        let mut p = CorrelationParams::from_vector(&v)?;
        if self.eta_omitted {
            p.eta = None;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressMethod {
    MonteCarlo,
    Historical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReverseStressConfig {
    /// HDR level; the region holds probability `1 - q`.
    pub q: f64,
    pub alpha: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for ReverseStressConfig {
    fn default() -> Self {
        Self {
            q: DEFAULT_Q,
            alpha: DEFAULT_ALPHA,
            n_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

/// Worst in-region scenario of a reverse stress test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressResult {
    pub method: StressMethod,
    pub beta_star: CorrelationParams,
    pub scenario_index: usize,
    pub variance: f64,
    pub var_alpha: f64,
    pub alpha: f64,
    pub density: f64,
    pub ln_density: f64,
    pub f_q: f64,
    pub ln_f_q: f64,
    pub q: f64,
    pub in_region: bool,
    pub n_scenarios: usize,
    pub n_in_region: usize,
}

impl StressResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Portfolio variance under the PSD-repaired model correlation of `beta`.
pub fn scenario_variance(
    beta: &CorrelationParams,
    assignment: &FactorAssignment,
    portfolio: &PortfolioSpec,
) -> Result<f64> {
    portfolio_variance(portfolio, &valid_model_correlation(beta, assignment)?)
}

/// Index of the largest eligible value; ties go to the lowest index.
pub fn argmax_variance(values: &[f64], eligible: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in values.iter().zip(eligible).enumerate() {
        if ok && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

fn ln_densities(density: &NigDensity, x: &DMatrix<f64>) -> Vec<f64> {
    par_map(x.nrows(), |i| density.log_density(&row(x, i)))
}

fn check_inputs(
    dist: &NigParams,
    layout: &ParamLayout,
    assignment: &FactorAssignment,
    portfolio: &PortfolioSpec,
    cfg: &ReverseStressConfig,
) -> Result<()> {
    if dist.dim() != layout.dim() {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            actual: dist.dim(),
            context: "distribution vs layout",
        });
    }
    if layout.n_factors != assignment.n_factors() {
        return Err(Error::DimensionMismatch {
            expected: assignment.n_factors(),
            actual: layout.n_factors,
            context: "layout vs assignment factors",
        });
    }
    if portfolio.n_assets() != assignment.n_assets() {
        return Err(Error::DimensionMismatch {
            expected: assignment.n_assets(),
            actual: portfolio.n_assets(),
            context: "portfolio vs assignment assets",
        });
    }
    portfolio.validate()?;
    if !(cfg.q > 0.0 && cfg.q < 1.0) {
        return Err(Error::invalid(format!("HDR level q = {} outside (0, 1)", cfg.q)));
    }
    if !(cfg.alpha > 0.5 && cfg.alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {} outside (0.5, 1)", cfg.alpha)));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn select(
    method: StressMethod,
    scenarios: &[CorrelationParams],
    ln_density: &[f64],
    region: &HdRegion,
    assignment: &FactorAssignment,
    portfolio: &PortfolioSpec,
    cfg: &ReverseStressConfig,
) -> Result<StressResult> {
    let eligible: Vec<bool> = ln_density.iter().map(|&l| region.contains_log(l)).collect();
    let n_in_region = eligible.iter().filter(|&&e| e).count();
    let variances = par_map(scenarios.len(), |i| {
        if eligible[i] {
            scenario_variance(&scenarios[i], assignment, portfolio)
        } else {
            Ok(f64::NEG_INFINITY)
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let idx = argmax_variance(&variances, &eligible).ok_or_else(|| {
        Error::invalid(format!(
            "no scenario lies in the {:.1}% highest-density region; increase q",
            100.0 * (1.0 - cfg.q)
        ))
    })?;
    let variance = variances[idx];
    Ok(StressResult {
        method,
        beta_star: scenarios[idx].clone(),
        scenario_index: idx,
        variance,
        var_alpha: var_from_variance(variance, portfolio.value, cfg.alpha)?,
        alpha: cfg.alpha,
        density: ln_density[idx].exp(),
        ln_density: ln_density[idx],
        f_q: region.f_q,
        ln_f_q: region.ln_f_q,
        q: cfg.q,
        in_region: true,
        n_scenarios: scenarios.len(),
        n_in_region,
    })
}

/// Monte Carlo reverse stress test: the sampled coefficient vector with the
/// largest portfolio variance among samples whose density is at least the
/// `q`-quantile of the sample densities.
pub fn reverse_stress_mc(
    dist: &NigParams,
    layout: &ParamLayout,
    assignment: &FactorAssignment,
    portfolio: &PortfolioSpec,
    cfg: &ReverseStressConfig,
) -> Result<StressResult> {
    check_inputs(dist, layout, assignment, portfolio, cfg)?;
    let x = sample_nig(dist, cfg.n_samples, &mut rng::stream(cfg.seed, stage::SAMPLING, 0));
    let ln = ln_densities(&dist.density(), &x);
    let region = hdr_threshold_log(&ln, cfg.q)?;
    let scenarios = (0..x.nrows())
        .map(|i| layout.embed(&row(&x, i)))
        .collect::<Result<Vec<_>>>()?;
    select(
        StressMethod::MonteCarlo,
        &scenarios,
        &ln,
        &region,
        assignment,
        portfolio,
        cfg,
    )
}

/// Historical reverse stress test: the past coefficient vector with the
/// largest portfolio variance among those inside the region, whose threshold
/// comes from a fresh sample of `cfg.n_samples` draws of `dist`.
pub fn reverse_stress_historical(
    history: &[CorrelationParams],
    dist: &NigParams,
    layout: &ParamLayout,
    assignment: &FactorAssignment,
    portfolio: &PortfolioSpec,
    cfg: &ReverseStressConfig,
) -> Result<StressResult> {
    check_inputs(dist, layout, assignment, portfolio, cfg)?;
    if history.is_empty() {
        return Err(Error::invalid("historical reverse stress needs a non-empty history"));
    }
    let density = dist.density();
    let reference = sample_nig(dist, cfg.n_samples, &mut rng::stream(cfg.seed, stage::HDR_REFERENCE, 0));
    let region = hdr_threshold_log(&ln_densities(&density, &reference), cfg.q)?;
    let ln = layout.history_matrix(history).map(|h| ln_densities(&density, &h))?;
    select(
        StressMethod::Historical,
        history,
        &ln,
        &region,
        assignment,
        portfolio,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax_variance(&[1.0, 3.0, 3.0, 2.0], &[true; 4]), Some(1));
        assert_eq!(
            argmax_variance(&[1.0, 3.0, 3.0, 2.0], &[true, false, true, true]),
            Some(2)
        );
        assert_eq!(argmax_variance(&[1.0], &[false]), None);
    }

    #[test]
    fn layout_fixes_constant_coordinates() {
        let h = vec![
            CorrelationParams::new(None, vec![0.1, 0.0], vec![0.3, 0.0]).unwrap(),
            CorrelationParams::new(None, vec![0.2, 0.0], vec![0.3, 0.0]).unwrap(),
        ];
        let l = ParamLayout::from_history(&h).unwrap();
        assert_eq!(l.active, vec![1]);
        assert!(l.eta_omitted);
        let names = vec!["F".to_string(), "G".to_string()];
        assert_eq!(l.labels(&names), vec!["lambda_F"]);
        assert_eq!(l.project(&h[1]).unwrap(), vec![0.2]);
        assert_eq!(l.embed(&[0.2]).unwrap(), h[1]);
        let m = l.history_matrix(&h).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (2, 1));
    }
}
