use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const MIN_HDR_SAMPLES: usize = 100;

/// Mahalanobis distance `sqrt((x - mu)' Sigma^{-1} (x - mu))`.
pub fn mahalanobis(x: &[f64], mu: &[f64], sigma: &DMatrix<f64>) -> Result<f64> {
    let n = mu.len();
    if x.len() != n || sigma.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: x.len(),
            context: "Mahalanobis arguments",
        });
    }
    let chol = linalg::cholesky(sigma, "Mahalanobis covariance")?;
    let diff = DVector::from_iterator(n, x.iter().zip(mu).map(|(a, b)| a - b));
    Ok(linalg::chol_quad_inv(&chol, &diff).max(0.0).sqrt())
}

/// Highest-density region `{x : f(x) >= f_q}` with probability `1 - q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdRegion {
    pub level_q: f64,
    pub f_q: f64,
    pub ln_f_q: f64,
    pub n_samples_used: usize,
}

impl HdRegion {
    pub fn contains_log(&self, ln_density: f64) -> bool {
        ln_density >= self.ln_f_q
    }

    pub fn contains(&self, density: f64) -> bool {
        density >= self.f_q
    }
}

/// Lower empirical quantile: the order statistic at index `floor(q (n - 1))`.
fn lower_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    let k = (q * (v.len() - 1) as f64).floor() as usize;
    let (_, kth, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    *kth
}

fn check(values: &[f64], q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("HDR level q = {q} outside (0, 1)")));
    }
    if values.len() < MIN_HDR_SAMPLES {
        return Err(Error::invalid(format!(
            "HDR threshold needs at least {MIN_HDR_SAMPLES} density values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("density values contain NaN".into()));
    }
    Ok(())
}

/// Threshold `f_q` from density values of a sample of the distribution itself.
pub fn hdr_threshold(density_values: &[f64], q: f64) -> Result<HdRegion> {
    check(density_values, q)?;
    if density_values.iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("density values must be non-negative"));
    }
    let f_q = lower_quantile(density_values, q);
    Ok(HdRegion {
        level_q: q,
        f_q,
        ln_f_q: f_q.ln(),
        n_samples_used: density_values.len(),
    })
}

/// [`hdr_threshold`] from log-density values.
pub fn hdr_threshold_log(ln_density_values: &[f64], q: f64) -> Result<HdRegion> {
    check(ln_density_values, q)?;
    let ln_f_q = lower_quantile(ln_density_values, q);
    Ok(HdRegion {
        level_q: q,
        f_q: ln_f_q.exp(),
        ln_f_q,
        n_samples_used: ln_density_values.len(),
    })
}
