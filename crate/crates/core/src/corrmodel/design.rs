//! Pair-level regression of Fisher-transformed correlations on factor
//! exposures, and the least-squares calibration built on it.

use nalgebra::{DMatrix, DVector};

use super::{CorrelationMatrix, CorrelationParams, FactorAssignment};
use crate::error::{Error, Result};

/// Empirical correlations are clamped to `±DEFAULT_CLAMP` before `atanh`.
pub const DEFAULT_CLAMP: f64 = 1.0 - 1e-7;

/// Gram condition number above which the constant column is dropped.
pub const CONDITION_LIMIT: f64 = 1e10;

/// Column role in a [`PairDesign`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignColumn {
    Constant,
    Inter(usize),
    Intra(usize),
}

/// One row per unordered asset pair `i < j`.
///
/// Columns are ordered constant, `d` inter columns `|1_ki - 1_kj|`, then `d`
/// intra columns `1_ki 1_kj`. The response is `atanh` of the clamped
/// empirical correlation.
#[derive(Debug, Clone)]
pub struct PairDesign {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub columns: Vec<DesignColumn>,
    pub pairs: Vec<(usize, usize)>,
}

pub fn build_pair_design(
    assignment: &FactorAssignment,
    empirical: &CorrelationMatrix,
    clamp: f64,
) -> Result<PairDesign> {
    if !(clamp > 0.0 && clamp < 1.0) {
        return Err(Error::invalid(format!("clamp {clamp} outside (0, 1)")));
    }
    let p = assignment.n_assets();
    if empirical.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: empirical.dim(),
            context: "empirical correlation vs assets",
        });
    }
    let d = assignment.n_factors();
    let n_rows = p * p.saturating_sub(1) / 2;
    let mut columns = vec![DesignColumn::Constant];
    columns.extend((0..d).map(DesignColumn::Inter));
    columns.extend((0..d).map(DesignColumn::Intra));

    let mut design = DMatrix::zeros(n_rows, 1 + 2 * d);
    let mut response = DVector::zeros(n_rows);
    let mut pairs = Vec::with_capacity(n_rows);
    let c = empirical.values();
    let mut row = 0;
    for i in 0..p {
        for j in (i + 1)..p {
            design[(row, 0)] = 1.0;
            for k in 0..d {
                let (a, b) = (assignment.is_exposed(i, k), assignment.is_exposed(j, k));
                if a != b {
                    design[(row, 1 + k)] = 1.0;
                }
                if a && b {
                    design[(row, 1 + d + k)] = 1.0;
                }
            }
            response[row] = c[(i, j)].clamp(-clamp, clamp).atanh();
            pairs.push((i, j));
            row += 1;
        }
    }
    Ok(PairDesign {
        design,
        response,
        columns,
        pairs,
    })
}

impl DesignColumn {
    pub fn label(&self, factor_names: &[String]) -> String {
        match *self {
            DesignColumn::Constant => "eta".to_string(),
            DesignColumn::Inter(k) => format!("lambda_{}", factor_names[k]),
            DesignColumn::Intra(k) => format!("nu_{}", factor_names[k]),
        }
    }
}

/// Calibrated coefficients plus least-squares diagnostics.
#[derive(Debug, Clone)]
pub struct CalibrationFit {
    pub params: CorrelationParams,
    pub rss: f64,
    pub r_squared: f64,
    /// Condition number of the Gram matrix of the retained columns.
    pub condition_number: f64,
    /// Labels of columns removed before solving; their coefficients are 0.
    pub pruned: Vec<String>,
}

struct Solved {
    coef: DVector<f64>,
    condition: f64,
}

/// Least squares through Householder QR; the Gram condition number is the
/// squared ratio of extreme singular values of `R`.
fn qr_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<Solved> {
    let q = x.ncols();
    if q == 0 || x.nrows() < q {
        return None;
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let sv = r.clone().singular_values();
    let (smax, smin) = sv
        .iter()
        .fold((0.0_f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let condition = if smin > 0.0 {
        (smax / smin).powi(2)
    } else {
        f64::INFINITY
    };
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, q).into_owned();
    let coef = r.solve_upper_triangular(&rhs)?;
    Some(Solved { coef, condition })
}

/// Fits the correlation surface to an empirical matrix by ordinary least
/// squares on `atanh(c_ij)`.
///
/// All-zero columns are removed first. If the design with the constant has a
/// Gram condition number above [`CONDITION_LIMIT`], the constant is dropped
/// and `eta` is reported absent. A design that is still ill-conditioned is
/// an error listing the pruned columns.
pub fn calibrate(empirical: &CorrelationMatrix, assignment: &FactorAssignment) -> Result<CalibrationFit> {
    calibrate_with_clamp(empirical, assignment, DEFAULT_CLAMP)
}

pub fn calibrate_with_clamp(
    empirical: &CorrelationMatrix,
    assignment: &FactorAssignment,
    clamp: f64,
) -> Result<CalibrationFit> {
    let pd = build_pair_design(assignment, empirical, clamp)?;
    let names = assignment.factor_names();
    let mut pruned = Vec::new();

    let mut keep: Vec<usize> = Vec::new();
    for (c, col) in pd.columns.iter().enumerate() {
        if pd.design.column(c).iter().all(|&v| v == 0.0) {
            pruned.push(col.label(names));
        } else {
            keep.push(c);
        }
    }

    let sub = |cols: &[usize]| pd.design.select_columns(cols.iter());
    let mut solved = qr_solve(&sub(&keep), &pd.response);
    let ill = |s: &Option<Solved>| s.as_ref().is_none_or(|s| !(s.condition <= CONDITION_LIMIT));
    if ill(&solved) && keep.first() == Some(&0) {
        keep.remove(0);
        pruned.insert(0, DesignColumn::Constant.label(names));
        solved = qr_solve(&sub(&keep), &pd.response);
    }
    if ill(&solved) {
        let detail = match &solved {
            Some(s) => format!("condition number {:e} exceeds {:e}", s.condition, CONDITION_LIMIT),
            None => format!("{} retained columns for {} pairs", keep.len(), pd.response.len()),
        };
        return Err(Error::RankDeficient { pruned, detail });
    }
    let solved = solved.expect("checked above");

    let d = assignment.n_factors();
    let mut eta = None;
    let mut lambda = vec![0.0; d];
    let mut nu = vec![0.0; d];
    for (pos, &c) in keep.iter().enumerate() {
        let v = solved.coef[pos];
        match pd.columns[c] {
            DesignColumn::Constant => eta = Some(v),
            DesignColumn::Inter(k) => lambda[k] = v,
            DesignColumn::Intra(k) => nu[k] = v,
        }
    }

    let fitted = sub(&keep) * &solved.coef;
    let resid = &pd.response - &fitted;
    let rss = resid.norm_squared();
    let mean = pd.response.mean();
    let tss: f64 = pd.response.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };

    Ok(CalibrationFit {
        params: CorrelationParams::new(eta, lambda, nu)?,
        rss,
        r_squared,
        condition_number: solved.condition,
        pruned,
    })
}
