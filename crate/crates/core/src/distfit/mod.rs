//! Multivariate normal-inverse-Gaussian law: density, sampling, EM fitting and
//! Kolmogorov-Smirnov diagnostics of its marginals.

mod em;
mod ks;
mod nig;

pub use em::{fit_em, log_likelihood, FitDiagnostics, DEFAULT_EM_TOL, DEFAULT_MAX_ITER, LOGLIK_SLACK};
pub use ks::{ks_test, marginal_ks_pvalues, CdfEvaluator, KsResult, NigMarginalCdf};
pub use nig::{
    marginal_params, nig_logdensity, sample_inverse_gaussian, sample_nig, NigDensity, NigParams, NIG_LAMBDA,
};
