//! Repair of indefinite correlation matrices: nearest correlation matrix in
//! Frobenius norm (alternating projections with Dykstra's correction) and the
//! identity blend used for round-off failures.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{CorrelationMatrix, MatrixSource, PSD_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Blend weight applied to matrices that fail the PSD check by round-off only.
pub const ROUNDOFF_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct NearestCorrelation {
    pub matrix: CorrelationMatrix,
    pub converged: bool,
    pub iterations: usize,
    /// Frobenius distance to the (symmetrized, unit-diagonal) input.
    pub distance: f64,
}

fn unit_diagonal_symmetric(input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !input.is_square() {
        return Err(Error::invalid("matrix must be square"));
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let mut m = linalg::symmetrize(input);
    m.fill_diagonal(1.0);
    Ok(m)
}

/// Projection onto the PSD cone: negative eigenvalues set to zero.
fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    out = linalg::symmetrize(&out);
    out
}

/// `D^{-1/2} m D^{-1/2}` with entries clamped to `[-1, 1]`.
fn rescale_to_unit_diagonal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let d = m[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut out = DMatrix::from_fn(n, n, |i, j| (m[(i, j)] * s[i] * s[j]).clamp(-1.0, 1.0));
    out = linalg::symmetrize(&out);
    out.fill_diagonal(1.0);
    out
}

/// Nearest correlation matrix to `input` in Frobenius norm.
///
/// Alternates between the PSD cone (with Dykstra's correction) and the
/// unit-diagonal set until the relative change of the iterate falls below
/// `tol`. When `max_iter` is exhausted the last iterate is returned with
/// `converged = false`.
pub fn nearest_correlation(input: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<NearestCorrelation> {
    let a = unit_diagonal_symmetric(input)?;
    let n = a.nrows();
    if n == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    if let Ok(c) = CorrelationMatrix::new(a.clone(), MatrixSource::Repaired) {
        if c.min_eigenvalue() >= 0.0 {
            return Ok(NearestCorrelation {
                matrix: c,
                converged: true,
                iterations: 0,
                distance: 0.0,
            });
        }
    }

    let mut y = a.clone();
    let mut x = a.clone();
    let mut correction = DMatrix::zeros(n, n);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let r = &y - &correction;
        x = project_psd(&r);
        correction = &x - &r;
        let y_prev = std::mem::replace(&mut y, x.clone());
        y.fill_diagonal(1.0);
        let change = linalg::frobenius_distance(&y, &y_prev) / y.norm();
        if change < tol {
            converged = true;
            break;
        }
    }

    let mut values = y.map(|v| v.clamp(-1.0, 1.0));
    values = linalg::symmetrize(&values);
    values.fill_diagonal(1.0);
    if linalg::min_eigenvalue(&values) < 0.0 {
        // final PSD iterate scaled back to unit diagonal
        values = rescale_to_unit_diagonal(&x);
    }
    let distance = linalg::frobenius_distance(&values, &a);
    let matrix = CorrelationMatrix::new(values, MatrixSource::Repaired)?;
    Ok(NearestCorrelation {
        matrix,
        converged,
        iterations,
        distance,
    })
}

/// Baseline repair: clip negative eigenvalues to zero, then rescale the
/// diagonal back to one.
pub fn eigenvalue_clip_repair(input: &DMatrix<f64>) -> Result<CorrelationMatrix> {
    let a = unit_diagonal_symmetric(input)?;
    CorrelationMatrix::new(rescale_to_unit_diagonal(&project_psd(&a)), MatrixSource::Repaired)
}

/// `(1 - epsilon) input + epsilon I`; eigenvalues map `l -> (1 - epsilon) l + epsilon`.
pub fn epsilon_blend(input: &DMatrix<f64>, epsilon: f64) -> Result<CorrelationMatrix> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let a = unit_diagonal_symmetric(input)?;
    let mut out = a * (1.0 - epsilon);
    out.fill_diagonal(1.0);
    CorrelationMatrix::new(out, MatrixSource::Repaired)
}

/// Applies the PSD policy: matrices with smallest eigenvalue in
/// `[-PSD_TOLERANCE, 0)` get the identity blend, anything more negative the
/// nearest-correlation projection.
pub fn ensure_psd(c: CorrelationMatrix) -> Result<CorrelationMatrix> {
    let min = c.min_eigenvalue();
    if min >= 0.0 {
        return Ok(c);
    }
    if min >= -PSD_TOLERANCE {
        return epsilon_blend(c.values(), ROUNDOFF_EPSILON);
    }
    let repaired = nearest_correlation(c.values(), DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    if !repaired.converged {
        log::warn!(
            "nearest correlation stopped after {} iterations without converging",
            repaired.iterations
        );
    }
    Ok(repaired.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(n: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, v)
    }

    #[test]
    fn valid_matrix_is_fixed_point() {
        let a = m(3, &[1.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 1.0]);
        let out = nearest_correlation(&a, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(out.matrix.values(), &a);
        assert_eq!(out.distance, 0.0);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn indefinite_three_by_three() {
        let a = m(3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let out = nearest_correlation(&a, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(out.converged);
        assert!(out.matrix.is_psd());
        assert!(out.matrix.min_eigenvalue() >= -1e-10);
        for i in 0..3 {
            assert_eq!(out.matrix.values()[(i, i)], 1.0);
        }
        let baseline = eigenvalue_clip_repair(&a).unwrap();
        let base_dist = linalg::frobenius_distance(baseline.values(), &a);
        assert!(out.distance <= base_dist, "{} > {}", out.distance, base_dist);
    }

    #[test]
    fn two_by_two_clamps_off_diagonal() {
        // For 2x2 the only free entry is c; validity is |c| <= 1.
        // Grid search over c in [-1, 1] confirms c = 1 minimises |1.2 - c|.
        let grid_best = (0..=20_000)
            .map(|k| -1.0 + k as f64 * 1e-4)
            .min_by(|a, b| (1.2 - a).abs().total_cmp(&(1.2 - b).abs()))
            .unwrap();
        assert!((grid_best - 1.0).abs() < 1e-12);
        let out = nearest_correlation(&m(2, &[1.0, 1.2, 1.2, 1.0]), DEFAULT_TOL, 10_000).unwrap();
        assert!((out.matrix.values()[(0, 1)] - grid_best).abs() < 1e-6);
    }

    #[test]
    fn reports_non_convergence() {
        let a = m(3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let out = nearest_correlation(&a, 1e-15, 2).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
        assert!(out.matrix.is_psd());
    }

    #[test]
    fn blend_arithmetic() {
        let a = m(2, &[1.0, 0.5, 0.5, 1.0]);
        let b = epsilon_blend(&a, 0.1).unwrap();
        assert!((b.values()[(0, 1)] - 0.45).abs() < 1e-15);
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(epsilon_blend(&id, 0.3).unwrap().values(), &id);
        assert!(epsilon_blend(&a, 0.0).is_err());
    }

    #[test]
    fn blend_lifts_roundoff_negative_eigenvalue() {
        // equicorrelation c has eigenvalues 1 + 2c and 1 - c (twice)
        let c = -0.5 - 5e-13;
        let a = m(3, &[1.0, c, c, c, 1.0, c, c, c, 1.0]);
        let before = linalg::min_eigenvalue(&a);
        assert!(before < 0.0 && before > -1e-10);
        let out = epsilon_blend(&a, 1e-8).unwrap();
        assert!(out.min_eigenvalue() >= 0.0);
        let via_policy = ensure_psd(CorrelationMatrix::new(a, MatrixSource::Model).unwrap()).unwrap();
        assert!(via_policy.min_eigenvalue() >= 0.0);
    }

    #[test]
    fn policy_routes_by_severity() {
        let valid = CorrelationMatrix::new(m(2, &[1.0, 0.2, 0.2, 1.0]), MatrixSource::Model).unwrap();
        assert_eq!(ensure_psd(valid.clone()).unwrap(), valid);
        let bad = CorrelationMatrix::new(
            m(3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]),
            MatrixSource::Model,
        )
        .unwrap();
        let fixed = ensure_psd(bad).unwrap();
        assert!(fixed.is_psd());
        assert_eq!(fixed.source(), MatrixSource::Repaired);
    }
}
