//! Bayesian variable selection of correlation risk factors per asset.
//!
//! Each asset's returns are regressed on standardized factor returns under a
//! conjugate normal / inverse-gamma prior. Models are explored by a
//! single-flip Metropolis-Hastings chain, posterior inclusion probabilities
//! (PIPs) are visit frequencies, and the median-probability model (PIP > 1/2)
//! becomes the asset's row of the factor assignment.

mod bayes;
mod mcmc;
mod select;

pub use bayes::{
    log_marginal_from_stats, log_marginal_likelihood, posterior_from_stats, posterior_update, BayesLinearPosterior,
    BayesLinearPrior, GPrior, PriorBuilder, RegressionStats,
};
pub use mcmc::{
    expected_size_weight, log_prior_model_prob, mcmc_model_search, prior_model_prob, InclusionPrior, McmcConfig,
    PipResult,
};
pub use select::{
    assignment_row, select_and_propagate, select_asset, standardize_columns, Selection, SelectionConfig,
    SelectionPrior, PIP_CEIL, PIP_FLOOR,
};
