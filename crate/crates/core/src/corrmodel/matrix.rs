use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CorrelationParams, FactorAssignment};
use crate::error::{Error, Result};
use crate::linalg;

/// Smallest eigenvalue still treated as positive semidefinite.
pub const PSD_TOLERANCE: f64 = 1e-10;

const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixSource {
    Empirical,
    Model,
    Repaired,
    Stressed,
}

/// Symmetric, unit-diagonal matrix with entries in `[-1, 1]`.
///
/// `is_psd` records whether the smallest eigenvalue is at least
/// `-PSD_TOLERANCE`; it is computed on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    values: DMatrix<f64>,
    is_psd: bool,
    min_eigenvalue: f64,
    source: MatrixSource,
}

impl CorrelationMatrix {
    pub fn new(values: DMatrix<f64>, source: MatrixSource) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::invalid("correlation matrix must be square"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("correlation matrix has non-finite entries"));
        }
        let n = values.nrows();
        for i in 0..n {
            if values[(i, i)] != 1.0 {
                return Err(Error::invalid(format!(
                    "diagonal entry {i} is {} instead of 1",
                    values[(i, i)]
                )));
            }
        }
        let asym = linalg::asymmetry(&values);
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::invalid(format!("matrix is not symmetric (max gap {asym:e})")));
        }
        if values.iter().any(|v| v.abs() > 1.0) {
            return Err(Error::invalid("correlation entries must lie in [-1, 1]"));
        }
        let min_eigenvalue = if n == 0 { 0.0 } else { linalg::min_eigenvalue(&values) };
        Ok(Self {
            values,
            is_psd: min_eigenvalue >= -PSD_TOLERANCE,
            min_eigenvalue,
            source,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            values: DMatrix::identity(n, n),
            is_psd: true,
            min_eigenvalue: 1.0,
            source: MatrixSource::Model,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_psd(&self) -> bool {
        self.is_psd
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn source(&self) -> MatrixSource {
        self.source
    }

    pub fn with_source(mut self, source: MatrixSource) -> Self {
        self.source = source;
        self
    }

    /// Mean of the strictly upper-triangular entries.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.dim();
        if n < 2 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += self.values[(i, j)];
            }
        }
        s / (n * (n - 1) / 2) as f64
    }
}

/// Argument of `tanh` for the pair `(i, j)`.
pub(crate) fn pair_score(params: &CorrelationParams, assignment: &FactorAssignment, i: usize, j: usize) -> f64 {
    let (ri, rj) = (assignment.row(i), assignment.row(j));
    let mut z = params.eta_or_zero();
    for k in 0..params.n_factors() {
        match (ri[k], rj[k]) {
            (true, true) => z += params.nu[k],
            (true, false) | (false, true) => z += params.lambda[k],
            (false, false) => {}
        }
    }
    z
}

/// Evaluates the factor correlation surface for every asset pair.
///
/// `c_ij = tanh(eta + sum_k lambda_k |1_ki - 1_kj| + sum_k nu_k 1_ki 1_kj)`.
pub fn model_correlation(params: &CorrelationParams, assignment: &FactorAssignment) -> Result<CorrelationMatrix> {
    params.validate()?;
    if params.n_factors() != assignment.n_factors() {
        return Err(Error::DimensionMismatch {
            expected: assignment.n_factors(),
            actual: params.n_factors(),
            context: "params vs assignment factors",
        });
    }
    let p = assignment.n_assets();
    let mut values = DMatrix::identity(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let c = pair_score(params, assignment, i, j).tanh();
            values[(i, j)] = c;
            values[(j, i)] = c;
        }
    }
    CorrelationMatrix::new(values, MatrixSource::Model)
}
