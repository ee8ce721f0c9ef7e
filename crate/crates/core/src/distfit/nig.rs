use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::special::ln_bessel_k;

/// GIG index of the normal-inverse-Gaussian law.
pub const NIG_LAMBDA: f64 = -0.5;

/// Multivariate normal-inverse-Gaussian parameters.
///
/// `X = mu + W gamma + sqrt(W) A Z` with `Sigma = A A'`, `Z ~ N(0, I)` and
/// `W ~ GIG(-1/2, chi, psi)`, i.e. inverse Gaussian with mean `sqrt(chi/psi)`
/// and shape `chi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NigFile", into = "NigFile")]
pub struct NigParams {
    chi: f64,
    psi: f64,
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    gamma: DVector<f64>,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct NigFile {
    dim: usize,
    #[serde(default)]
    labels: Vec<String>,
    chi: f64,
    psi: f64,
    mu: Vec<f64>,
    gamma: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

impl TryFrom<NigFile> for NigParams {
    type Error = Error;
    fn try_from(f: NigFile) -> Result<Self> {
        let n = f.mu.len();
        if f.dim != n {
            return Err(Error::DimensionMismatch {
                expected: f.dim,
                actual: n,
                context: "NIG dim vs mu",
            });
        }
        if f.sigma.len() != n || f.sigma.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("sigma must be dim x dim"));
        }
        let sigma = DMatrix::from_fn(n, n, |i, j| f.sigma[i][j]);
        let p = NigParams::new(f.chi, f.psi, DVector::from_vec(f.mu), sigma, DVector::from_vec(f.gamma))?;
        if f.labels.is_empty() {
            Ok(p)
        } else {
            p.with_labels(f.labels)
        }
    }
}

impl From<NigParams> for NigFile {
    fn from(p: NigParams) -> Self {
        let n = p.dim();
        NigFile {
            dim: n,
            labels: p.labels,
            chi: p.chi,
            psi: p.psi,
            mu: p.mu.iter().copied().collect(),
            gamma: p.gamma.iter().copied().collect(),
            sigma: (0..n).map(|i| (0..n).map(|j| p.sigma[(i, j)]).collect()).collect(),
        }
    }
}

impl NigParams {
    pub fn new(chi: f64, psi: f64, mu: DVector<f64>, sigma: DMatrix<f64>, gamma: DVector<f64>) -> Result<Self> {
        if !(chi > 0.0 && chi.is_finite() && psi > 0.0 && psi.is_finite()) {
            return Err(Error::invalid(format!("chi = {chi}, psi = {psi} must be positive")));
        }
        let n = mu.len();
        if n == 0 {
            return Err(Error::invalid("NIG dimension must be positive"));
        }
        if gamma.len() != n || sigma.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: gamma.len().max(sigma.nrows()),
                context: "NIG parameter dimensions",
            });
        }
        if mu
            .iter()
            .chain(gamma.iter())
            .chain(sigma.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("NIG parameters must be finite"));
        }
        if linalg::asymmetry(&sigma) > 1e-10 * sigma.amax().max(1.0) {
            return Err(Error::invalid("Sigma must be symmetric"));
        }
        let sigma = linalg::symmetrize(&sigma);
        linalg::cholesky(&sigma, "Sigma")?;
        Ok(Self {
            chi,
            psi,
            mu,
            sigma,
            gamma,
            labels: Vec::new(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: labels.len(),
                context: "NIG labels",
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
    pub fn chi(&self) -> f64 {
        self.chi
    }
    pub fn psi(&self) -> f64 {
        self.psi
    }
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Mean of the mixing variable, `sqrt(chi / psi)`.
    pub fn mixing_mean(&self) -> f64 {
        (self.chi / self.psi).sqrt()
    }

    /// Variance of the mixing variable, `mean^3 / chi`.
    pub fn mixing_variance(&self) -> f64 {
        self.mixing_mean().powi(3) / self.chi
    }

    /// `E[X] = mu + E[W] gamma`.
    pub fn mean(&self) -> DVector<f64> {
        &self.mu + &self.gamma * self.mixing_mean()
    }

    /// `Cov[X] = E[W] Sigma + Var[W] gamma gamma'`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.sigma * self.mixing_mean() + &self.gamma * self.gamma.transpose() * self.mixing_variance()
    }

    /// Precomputes the factorization used by repeated density evaluations.
    pub fn density(&self) -> NigDensity {
        NigDensity::new(self)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.density().log_density(x)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Log density of the generalized hyperbolic law at `lambda = -1/2`.
pub fn nig_logdensity(x: &[f64], params: &NigParams) -> f64 {
    params.log_density(x)
}

/// Density evaluator with the Cholesky factor of `Sigma` and constants cached.
#[derive(Debug, Clone)]
pub struct NigDensity {
    chol: Cholesky<f64, Dyn>,
    mu: DVector<f64>,
    /// `Sigma^{-1} gamma`
    sigma_inv_gamma: DVector<f64>,
    chi: f64,
    psi_tilde: f64,
    order: f64,
    ln_const: f64,
}

impl NigDensity {
    fn new(p: &NigParams) -> Self {
        let d = p.dim() as f64;
        let chol = linalg::cholesky(&p.sigma, "Sigma").expect("validated on construction");
        let sigma_inv_gamma = chol.solve(&p.gamma);
        let g = p.gamma.dot(&sigma_inv_gamma);
        let psi_tilde = p.psi + g;
        let lambda = NIG_LAMBDA;
        let ln_const = -0.5 * lambda * (p.chi * p.psi).ln() + lambda * p.psi.ln() + (0.5 * d - lambda) * psi_tilde.ln()
            - 0.5 * d * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * linalg::chol_logdet(&chol)
            - ln_bessel_k(lambda, (p.chi * p.psi).sqrt());
        Self {
            chol,
            mu: p.mu.clone(),
            sigma_inv_gamma,
            chi: p.chi,
            psi_tilde,
            order: lambda - 0.5 * d,
            ln_const,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Mahalanobis quadratic `(x - mu)' Sigma^{-1} (x - mu)` and the skew term `(x - mu)' Sigma^{-1} gamma`.
    fn quad_and_skew(&self, x: &[f64]) -> (f64, f64) {
        let diff = DVector::from_iterator(self.mu.len(), x.iter().zip(self.mu.iter()).map(|(a, b)| a - b));
        (
            linalg::chol_quad_inv(&self.chol, &diff),
            diff.dot(&self.sigma_inv_gamma),
        )
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "point dimension");
        let (q, skew) = self.quad_and_skew(x);
        let z = ((self.chi + q) * self.psi_tilde).sqrt();
        let v = self.ln_const + ln_bessel_k(self.order, z) + skew + self.order * z.ln();
        if v.is_nan() || v == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// Allocation-free log density for one-dimensional laws.
    pub fn log_density_scalar(&self, x: f64) -> f64 {
        assert_eq!(self.dim(), 1, "scalar evaluation needs a 1-d law");
        let l = self.chol.l_dirty()[(0, 0)];
        let diff = x - self.mu[0];
        let q = diff * diff / (l * l);
        let z = ((self.chi + q) * self.psi_tilde).sqrt();
        let v = self.ln_const + ln_bessel_k(self.order, z) + diff * self.sigma_inv_gamma[0] + self.order * z.ln();
        if v.is_nan() || v == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Conditional moments `(E[W | x], E[1/W | x])`; `W | x ~ GIG(lambda - d/2, chi + Q, psi + gamma' Sigma^{-1} gamma)`.
    pub(crate) fn mixing_posterior_moments(&self, x: &[f64]) -> (f64, f64) {
        let (q, _) = self.quad_and_skew(x);
        let chi_x = self.chi + q;
        let z = (chi_x * self.psi_tilde).sqrt();
        let ln_k = ln_bessel_k(self.order, z);
        let ratio_up = (ln_bessel_k(self.order + 1.0, z) - ln_k).exp();
        let ratio_down = (ln_bessel_k(self.order - 1.0, z) - ln_k).exp();
        let scale = (chi_x / self.psi_tilde).sqrt();
        (scale * ratio_up, ratio_down / scale)
    }
}

/// Inverse Gaussian draw with the given mean and shape (Michael, Schucany and Haas).
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    let nu: f64 = StandardNormal.sample(rng);
    let y = nu * nu;
    let m = mean;
    let x = m + m * m * y / (2.0 * shape) - m / (2.0 * shape) * (4.0 * m * shape * y + m * m * y * y).sqrt();
    let u: f64 = rng.gen();
    let w = if u <= m / (m + x) { x } else { m * m / x };
    // x can round to zero for extreme draws
    w.max(f64::MIN_POSITIVE)
}

/// Draws `n_samples` rows `mu + W gamma + sqrt(W) A Z`.
pub fn sample_nig<R: Rng + ?Sized>(params: &NigParams, n_samples: usize, rng: &mut R) -> DMatrix<f64> {
    let d = params.dim();
    let a = linalg::cholesky(&params.sigma, "Sigma").expect("validated").l();
    let (m, shape) = (params.mixing_mean(), params.chi);
    let mut out = DMatrix::zeros(n_samples, d);
    let mut z = DVector::zeros(d);
    for i in 0..n_samples {
        let w = sample_inverse_gaussian(m, shape, rng);
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let az = &a * &z;
        let sw = w.sqrt();
        for k in 0..d {
            out[(i, k)] = params.mu[k] + w * params.gamma[k] + sw * az[k];
        }
    }
    out
}

/// Law of `w'X`: same `chi`, `psi`; location `w'mu`, skew `w'gamma`, scale `w' Sigma w`.
pub fn marginal_params(params: &NigParams, weights: &[f64]) -> Result<NigParams> {
    if weights.len() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            actual: weights.len(),
            context: "projection weights",
        });
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::invalid("projection weights are all zero"));
    }
    let w = DVector::from_column_slice(weights);
    let scale = w.dot(&(&params.sigma * &w));
    NigParams::new(
        params.chi,
        params.psi,
        DVector::from_element(1, w.dot(&params.mu)),
        DMatrix::from_element(1, 1, scale),
        DVector::from_element(1, w.dot(&params.gamma)),
    )
}
