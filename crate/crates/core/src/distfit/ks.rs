use crate::error::{Error, Result};
use crate::special::kolmogorov_sf;

use super::nig::{marginal_params, NigDensity, NigParams};

const QUAD_TOL: f64 = 1e-12;

/// One-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// CDF evaluated at ascending points.
pub trait CdfEvaluator {
    fn cdf_sorted(&self, sorted: &[f64]) -> Vec<f64>;
}

impl<F: Fn(f64) -> f64> CdfEvaluator for F {
    fn cdf_sorted(&self, sorted: &[f64]) -> Vec<f64> {
        sorted.iter().map(|&x| self(x)).collect()
    }
}

/// Kolmogorov-Smirnov test of `samples` against `cdf`.
///
/// The p-value uses the Kolmogorov limit law at `(sqrt(n) + 0.12 + 0.11/sqrt(n)) D`.
pub fn ks_test<C: CdfEvaluator + ?Sized>(samples: &[f64], cdf: &C) -> Result<KsResult> {
    if samples.len() < 20 {
        return Err(Error::invalid(format!(
            "KS test needs at least 20 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("KS samples must be finite"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let f = cdf.cdf_sorted(&sorted);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &fi) in f.iter().enumerate() {
        if !(0.0..=1.0).contains(&fi) {
            return Err(Error::Numerical(format!("CDF value {fi} outside [0, 1]")));
        }
        d = d.max((i as f64 + 1.0) / n - fi).max(fi - i as f64 / n);
    }
    let sn = n.sqrt();
    let p = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d).clamp(0.0, 1.0);
    Ok(KsResult {
        statistic: d,
        p_value: p,
    })
}

/// CDF of a one-dimensional NIG law by numerical integration of its density.
#[derive(Debug, Clone)]
pub struct NigMarginalCdf {
    density: NigDensity,
    location: f64,
}

impl NigMarginalCdf {
    pub fn new(params: &NigParams) -> Result<Self> {
        if params.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: params.dim(),
                context: "marginal CDF",
            });
        }
        Ok(Self {
            density: params.density(),
            location: params.mean()[0],
        })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.density.log_density_scalar(x).exp()
    }

    fn integrate(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        quadrature::integrate(|x| self.pdf(x), a, b, QUAD_TOL).integral
    }

    /// `int f` over the half line starting at `a` in direction `sign`, via `x = a + sign t/(1-t)`.
    fn tail(&self, a: f64, sign: f64) -> f64 {
        quadrature::integrate(
            |t| {
                if t >= 1.0 {
                    return 0.0;
                }
                let s = 1.0 - t;
                let v = self.pdf(a + sign * t / s);
                if v == 0.0 {
                    0.0
                } else {
                    v / (s * s)
                }
            },
            0.0,
            1.0,
            QUAD_TOL,
        )
        .integral
    }

    /// Total mass of the numerical density; 1 up to quadrature error.
    pub fn total_mass(&self) -> f64 {
        self.tail(self.location, -1.0) + self.tail(self.location, 1.0)
    }

    /// Unnormalized integral of the density up to `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_sorted(&[x])[0]
    }
}

impl CdfEvaluator for NigMarginalCdf {
    fn cdf_sorted(&self, sorted: &[f64]) -> Vec<f64> {
        let Some((&first, _)) = sorted.split_first() else {
            return Vec::new();
        };
        let last = sorted[sorted.len() - 1];
        let mut acc = self.tail(first, -1.0);
        let mut out = Vec::with_capacity(sorted.len());
        out.push(acc);
        for w in sorted.windows(2) {
            acc += self.integrate(w[0], w[1]);
            out.push(acc);
        }
        let total = acc + self.tail(last, 1.0);
        for v in &mut out {
            *v = (*v / total).clamp(0.0, 1.0);
        }
        out
    }
}

/// KS p-value of each column of `samples` (rows are observations) against the
/// corresponding coordinate marginal of `params`.
pub fn marginal_ks_pvalues(samples: &nalgebra::DMatrix<f64>, params: &NigParams) -> Result<Vec<f64>> {
    let d = params.dim();
    if samples.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: samples.ncols(),
            context: "KS sample columns",
        });
    }
    (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            let cdf = NigMarginalCdf::new(&marginal_params(params, &e)?)?;
            let col: Vec<f64> = samples.column(k).iter().copied().collect();
            Ok(ks_test(&col, &cdf)?.p_value)
        })
        .collect()
}
