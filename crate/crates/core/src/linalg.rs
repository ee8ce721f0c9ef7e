//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::NAN)
}

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Returns `(m + m') / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// `log |det m|` from a Cholesky factor.
pub fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Quadratic form `v' m^{-1} v` via a Cholesky factor of `m`.
pub fn chol_quad_inv(chol: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> f64 {
    let z = chol
        .l_dirty()
        .lower_triangle()
        .solve_lower_triangular(v)
        .expect("cholesky factor has positive diagonal");
    z.norm_squared()
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

/// Sample covariance (denominator `n - 1`) of the rows of `x`.
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mean = column_means(x);
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    centered.transpose() * centered / (n as f64 - 1.0)
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Pearson correlation matrix of the columns of `x`; `None` when a column has zero variance.
pub fn correlation_of_columns(x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let cov = sample_covariance(x);
    let p = cov.nrows();
    let sd: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    if sd.iter().any(|s| !(*s > 0.0)) {
        return None;
    }
    let mut c = DMatrix::from_fn(p, p, |i, j| cov[(i, j)] / (sd[i] * sd[j]));
    for i in 0..p {
        c[(i, i)] = 1.0;
        for j in 0..i {
            let v = (0.5 * (c[(i, j)] + c[(j, i)])).clamp(-1.0, 1.0);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_inv_matches_explicit_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let v = DVector::from_vec(vec![1.0, -2.0]);
        let chol = cholesky(&m, "m").unwrap();
        let expected = (v.transpose() * m.clone().try_inverse().unwrap() * &v)[(0, 0)];
        assert!((chol_quad_inv(&chol, &v) - expected).abs() < 1e-12);
        assert!((chol_logdet(&chol) - m.determinant().ln()).abs() < 1e-12);
    }

    #[test]
    fn correlation_rejects_constant_column() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 3.0, 1.0, 5.0]);
        assert!(correlation_of_columns(&x).is_none());
    }
}
