use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::corrmodel::CorrelationMatrix;
use crate::error::{Error, Result};

/// Weights, current value and per-asset daily return volatilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSpec {
    pub weights: Vec<f64>,
    pub value: f64,
    pub vols: Vec<f64>,
}

impl PortfolioSpec {
    pub fn new(weights: Vec<f64>, value: f64, vols: Vec<f64>) -> Result<Self> {
        let p = Self { weights, value, vols };
        p.validate()?;
        Ok(p)
    }

    pub fn equal_weight(value: f64, vols: Vec<f64>) -> Result<Self> {
        let n = vols.len();
        if n == 0 {
            return Err(Error::invalid("portfolio needs at least one asset"));
        }
        Self::new(vec![1.0 / n as f64; n], value, vols)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.vols.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: self.vols.len(),
                context: "vols vs weights",
            });
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() >= 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        if self.vols.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("volatilities must be finite and non-negative"));
        }
        if !self.value.is_finite() {
            return Err(Error::invalid("portfolio value must be finite"));
        }
        Ok(())
    }

    pub fn n_assets(&self) -> usize {
        self.weights.len()
    }

    /// Same weights and value with new volatilities.
    pub fn with_vols(&self, vols: Vec<f64>) -> Result<Self> {
        Self::new(self.weights.clone(), self.value, vols)
    }
}

fn check(portfolio: &PortfolioSpec, corr: &CorrelationMatrix) -> Result<()> {
    portfolio.validate()?;
    if corr.dim() != portfolio.n_assets() {
        return Err(Error::DimensionMismatch {
            expected: portfolio.n_assets(),
            actual: corr.dim(),
            context: "correlation vs portfolio",
        });
    }
    if !corr.is_psd() {
        return Err(Error::invalid(format!(
            "correlation matrix is not PSD (min eigenvalue {:e}); repair it first",
            corr.min_eigenvalue()
        )));
    }
    Ok(())
}

/// `w' diag(vol) C diag(vol) w`.
pub fn portfolio_variance(portfolio: &PortfolioSpec, corr: &CorrelationMatrix) -> Result<f64> {
    check(portfolio, corr)?;
    let c = corr.values();
    let a: Vec<f64> = portfolio
        .weights
        .iter()
        .zip(&portfolio.vols)
        .map(|(w, s)| w * s)
        .collect();
    let mut v = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            v += a[i] * c[(i, j)] * a[j];
        }
    }
    Ok(v.max(0.0))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0.5, 1)")));
    }
    Ok(())
}

/// `-N^{-1}(1 - alpha) V0 sqrt(variance)`.
pub fn var_from_variance(variance: f64, value: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let z = Normal::standard().inverse_cdf(1.0 - alpha);
    Ok(-z * value * variance.max(0.0).sqrt())
}

/// Zero-mean variance-covariance VaR, reported as a positive loss.
pub fn var_gaussian(portfolio: &PortfolioSpec, corr: &CorrelationMatrix, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    var_from_variance(portfolio_variance(portfolio, corr)?, portfolio.value, alpha)
}

/// Gaussian expected shortfall `V0 sigma phi(z) / (1 - alpha)`.
pub fn expected_shortfall_gaussian(portfolio: &PortfolioSpec, corr: &CorrelationMatrix, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let n = Normal::standard();
    let z = n.inverse_cdf(1.0 - alpha);
    Ok(portfolio.value * portfolio_variance(portfolio, corr)?.sqrt() * n.pdf(z) / (1.0 - alpha))
}
