//! Conjugate normal / inverse-gamma linear model.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg;

/// `beta | sigma^2 ~ N(m, sigma^2 M)`, `sigma^2 ~ IG(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesLinearPrior {
    pub m: DVector<f64>,
    pub scale: DMatrix<f64>,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesLinearPosterior {
    pub m: DVector<f64>,
    pub scale: DMatrix<f64>,
    pub a: f64,
    pub b: f64,
}

impl BayesLinearPrior {
    pub fn new(m: DVector<f64>, scale: DMatrix<f64>, a: f64, b: f64) -> Result<Self> {
        if scale.nrows() != m.len() || scale.ncols() != m.len() {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                actual: scale.nrows(),
                context: "prior scale vs mean",
            });
        }
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::invalid("inverse-gamma shape and scale must be positive"));
        }
        Ok(Self { m, scale, a, b })
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// Sufficient statistics `X'X`, `X'y`, `y'y`, `n` of a regression.
#[derive(Debug, Clone)]
pub struct RegressionStats {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl RegressionStats {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                actual: x.nrows(),
                context: "design rows vs response",
            });
        }
        Ok(Self {
            xtx: x.tr_mul(x),
            xty: x.tr_mul(y),
            yty: y.norm_squared(),
            n: y.len(),
        })
    }

    /// Statistics of the sub-model using columns `cols`.
    pub fn subset(&self, cols: &[usize]) -> Self {
        Self {
            xtx: self.xtx.select_rows(cols.iter()).select_columns(cols.iter()),
            xty: self.xty.select_rows(cols.iter()),
            yty: self.yty,
            n: self.n,
        }
    }
}

/// Produces the coefficient prior for a sub-model from its Gram matrix.
pub trait PriorBuilder {
    fn build(&self, xtx: &DMatrix<f64>, n: usize) -> Result<BayesLinearPrior>;
}

impl<F> PriorBuilder for F
where
    F: Fn(&DMatrix<f64>, usize) -> Result<BayesLinearPrior>,
{
    fn build(&self, xtx: &DMatrix<f64>, n: usize) -> Result<BayesLinearPrior> {
        self(xtx, n)
    }
}

/// Zellner g-prior: `m = 0`, `M = g (X'X)^{-1}` with `g = n` unless overridden.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GPrior {
    pub g: Option<f64>,
    pub a: f64,
    pub b: f64,
}

impl Default for GPrior {
    fn default() -> Self {
        Self {
            g: None,
            a: 0.01,
            b: 0.01,
        }
    }
}

impl PriorBuilder for GPrior {
    fn build(&self, xtx: &DMatrix<f64>, n: usize) -> Result<BayesLinearPrior> {
        let q = xtx.nrows();
        let g = self.g.unwrap_or(n as f64);
        let scale = if q == 0 {
            DMatrix::zeros(0, 0)
        } else {
            linalg::cholesky(xtx, "X'X")?.inverse() * g
        };
        BayesLinearPrior::new(DVector::zeros(q), scale, self.a, self.b)
    }
}

struct Pieces {
    post_prec: DMatrix<f64>,
    post_mean: DVector<f64>,
    a: f64,
    b: f64,
    ln_det_prior_scale: f64,
    ln_det_post_prec: f64,
}

fn update_pieces(prior: &BayesLinearPrior, stats: &RegressionStats) -> Result<Pieces> {
    let q = prior.dim();
    if stats.xtx.nrows() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            actual: stats.xtx.nrows(),
            context: "design columns vs prior",
        });
    }
    let a = prior.a + stats.n as f64 / 2.0;
    if q == 0 {
        return Ok(Pieces {
            post_prec: DMatrix::zeros(0, 0),
            post_mean: DVector::zeros(0),
            a,
            b: prior.b + 0.5 * stats.yty,
            ln_det_prior_scale: 0.0,
            ln_det_post_prec: 0.0,
        });
    }
    let prior_chol = linalg::cholesky(&prior.scale, "prior scale M")?;
    let prior_prec = prior_chol.inverse();
    let post_prec = linalg::symmetrize(&(&stats.xtx + &prior_prec));
    let post_chol = linalg::cholesky(&post_prec, "X'X + M^{-1}")?;
    let h = &prior_prec * &prior.m + &stats.xty;
    let post_mean = post_chol.solve(&h);
    let quad_prior = prior.m.dot(&(&prior_prec * &prior.m));
    let quad_post = linalg::chol_quad_inv(&post_chol, &h);
    let b = prior.b + 0.5 * (stats.yty + quad_prior - quad_post);
    Ok(Pieces {
        ln_det_prior_scale: linalg::chol_logdet(&prior_chol),
        ln_det_post_prec: linalg::chol_logdet(&post_chol),
        post_prec,
        post_mean,
        a,
        b,
    })
}

/// Conjugate update:
/// `M~ = (X'X + M^{-1})^{-1}`, `m~ = M~ (M^{-1} m + X'y)`, `a~ = a + n/2`,
/// `b~ = b + (y'y + m'M^{-1}m - m~'M~^{-1}m~) / 2`.
pub fn posterior_update(prior: &BayesLinearPrior, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<BayesLinearPosterior> {
    if x.ncols() != prior.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            actual: x.ncols(),
            context: "design columns vs prior",
        });
    }
    posterior_from_stats(prior, &RegressionStats::new(x, y)?)
}

pub fn posterior_from_stats(prior: &BayesLinearPrior, stats: &RegressionStats) -> Result<BayesLinearPosterior> {
    let p = update_pieces(prior, stats)?;
    let scale = if prior.dim() == 0 {
        DMatrix::zeros(0, 0)
    } else {
        linalg::cholesky(&p.post_prec, "posterior precision")?.inverse()
    };
    Ok(BayesLinearPosterior {
        m: p.post_mean,
        scale,
        a: p.a,
        b: p.b,
    })
}

/// `ln p(y | model)` in closed form:
/// `-n/2 ln 2pi + (ln|M~| - ln|M|)/2 + a ln b - a~ ln b~ + ln G(a~) - ln G(a)`.
pub fn log_marginal_from_stats(prior: &BayesLinearPrior, stats: &RegressionStats) -> Result<f64> {
    let p = update_pieces(prior, stats)?;
    if !(p.b > 0.0) {
        return Err(Error::Numerical(format!("posterior scale b~ = {} not positive", p.b)));
    }
    let n = stats.n as f64;
    let v = -0.5 * n * (2.0 * std::f64::consts::PI).ln()
        + 0.5 * (-p.ln_det_post_prec - p.ln_det_prior_scale)
        + prior.a * prior.b.ln()
        - p.a * p.b.ln()
        + ln_gamma(p.a)
        - ln_gamma(prior.a);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical("log marginal likelihood is not finite".into()))
    }
}

/// Log marginal likelihood of the sub-model selecting the columns of `x_full`
/// flagged in `gamma`.
pub fn log_marginal_likelihood(
    gamma: &[bool],
    x_full: &DMatrix<f64>,
    y: &DVector<f64>,
    prior_builder: &dyn PriorBuilder,
) -> Result<f64> {
    if gamma.len() != x_full.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x_full.ncols(),
            actual: gamma.len(),
            context: "model indicator vs columns",
        });
    }
    let stats = RegressionStats::new(x_full, y)?;
    let cols: Vec<usize> = (0..gamma.len()).filter(|&k| gamma[k]).collect();
    let sub = stats.subset(&cols);
    let prior = prior_builder.build(&sub.xtx, sub.n)?;
    log_marginal_from_stats(&prior, &sub)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_prior() -> BayesLinearPrior {
        BayesLinearPrior::new(DVector::zeros(1), DMatrix::identity(1, 1), 1.0, 1.0).unwrap()
    }

    #[test]
    fn empty_data_returns_prior() {
        let prior = BayesLinearPrior::new(
            DVector::from_vec(vec![0.5, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            2.0,
            3.0,
        )
        .unwrap();
        let post = posterior_update(&prior, &DMatrix::zeros(0, 2), &DVector::zeros(0)).unwrap();
        assert!((post.m - &prior.m).amax() < 1e-12);
        assert!((post.scale - &prior.scale).amax() < 1e-12);
        assert_eq!(post.a, prior.a);
        assert!((post.b - prior.b).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_update() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 3.0]);
        let post = posterior_update(&unit_prior(), &x, &y).unwrap();
        assert!((post.scale[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
        assert!((post.m[0] - 4.0 / 3.0).abs() < 1e-14);
        assert_eq!(post.a, 2.0);
        assert!((post.b - (1.0 + 0.5 * (10.0 - 16.0 / 3.0))).abs() < 1e-14);
    }

    #[test]
    fn diffuse_limit_is_ols() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 1.0, -1.0, 1.0, 2.0, 1.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, -0.5, 3.2, 0.4]);
        let prior = BayesLinearPrior::new(DVector::zeros(2), DMatrix::identity(2, 2) * 1e12, 1.0, 1.0).unwrap();
        let post = posterior_update(&prior, &x, &y).unwrap();
        let ols = (x.tr_mul(&x)).try_inverse().unwrap() * x.tr_mul(&y);
        assert!((post.m - ols).amax() < 1e-6);
    }

    #[test]
    fn singular_prior_scale_rejected() {
        let prior = BayesLinearPrior::new(DVector::zeros(2), DMatrix::zeros(2, 2), 1.0, 1.0).unwrap();
        let x = DMatrix::identity(2, 2);
        assert!(posterior_update(&prior, &x, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn g_prior_marginal_matches_closed_form() {
        // with M = g (X'X)^{-1}: ln|M~| - ln|M| = -q ln(1+g), b~ = b + (y'y - g/(1+g) y'Py)/2
        let x = DMatrix::from_row_slice(5, 2, &[0.3, 1.0, -1.2, 0.4, 0.8, -0.7, 1.5, 0.2, -0.1, 0.9]);
        let y = DVector::from_vec(vec![0.5, -1.0, 0.7, 1.9, 0.3]);
        let gp = GPrior {
            g: Some(5.0),
            a: 0.5,
            b: 0.2,
        };
        let lml = log_marginal_likelihood(&[true, true], &x, &y, &gp).unwrap();
        let xtx_inv = x.tr_mul(&x).try_inverse().unwrap();
        let ypy = (y.transpose() * &x * xtx_inv * x.transpose() * &y)[(0, 0)];
        let (g, n, a, b) = (5.0_f64, 5.0_f64, 0.5_f64, 0.2_f64);
        let bt = b + 0.5 * (y.norm_squared() - g / (1.0 + g) * ypy);
        let at = a + n / 2.0;
        let expected = -0.5 * n * (2.0 * std::f64::consts::PI).ln() - (1.0 + g).ln() + a * b.ln() - at * bt.ln()
            + ln_gamma(at)
            - ln_gamma(a);
        assert!((lml - expected).abs() < 1e-10, "{lml} vs {expected}");
    }
}
