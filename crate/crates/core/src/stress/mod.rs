//! Portfolio VaR under baseline and stressed correlations, highest-density
//! regions of the coefficient distribution, and reverse stress tests.

mod hdr;
mod portfolio;
mod reverse;
mod scenario;
mod series;

pub use hdr::{hdr_threshold, hdr_threshold_log, mahalanobis, HdRegion, MIN_HDR_SAMPLES};
pub use portfolio::{expected_shortfall_gaussian, portfolio_variance, var_from_variance, var_gaussian, PortfolioSpec};
pub use reverse::{
    argmax_variance, reverse_stress_historical, reverse_stress_mc, scenario_variance, ParamLayout, ReverseStressConfig,
    StressMethod, StressResult, DEFAULT_ALPHA, DEFAULT_MC_SAMPLES, DEFAULT_Q,
};
pub use scenario::ScenarioFile;
pub use series::{read_var_csv, stressed_var_series, write_var_csv, VarPoint};
