//! Parametric correlation surface driven by factor exposures: evaluation,
//! calibration from an empirical matrix, scenario shifts and PSD repair.

mod assignment;
mod design;
mod io;
mod matrix;
mod params;
mod repair;

pub use assignment::FactorAssignment;
pub use design::{
    build_pair_design, calibrate, calibrate_with_clamp, CalibrationFit, DesignColumn, PairDesign, CONDITION_LIMIT,
    DEFAULT_CLAMP,
};
pub(crate) use io::{factors_from_header, parse_params_fields};
pub use io::{params_header, read_params_csv, write_params_csv, DATE_FORMAT};
pub use matrix::{model_correlation, CorrelationMatrix, MatrixSource, PSD_TOLERANCE};
pub use params::{apply_scenario, Coefficient, CorrelationParams};
pub use repair::{
    eigenvalue_clip_repair, ensure_psd, epsilon_blend, nearest_correlation, NearestCorrelation, DEFAULT_MAX_ITER,
    DEFAULT_TOL, ROUNDOFF_EPSILON,
};

/// Model correlation followed by the PSD policy of [`ensure_psd`].
pub fn valid_model_correlation(
    params: &CorrelationParams,
    assignment: &FactorAssignment,
) -> crate::Result<CorrelationMatrix> {
    ensure_psd(model_correlation(params, assignment)?)
}
