//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Least-squares solution of `x * beta ≈ y` via SVD. Rank-deficient systems
/// get the minimum-norm solution. Returns `(beta, rank)`.
pub fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, usize) {
    if x.ncols() == 0 {
        return (DVector::zeros(0), 0);
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = smax * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let beta = svd
        .solve(y, tol)
        .unwrap_or_else(|_| DVector::zeros(x.ncols()));
    (beta, rank)
}

/// Multi-column least squares, one column of `y` per equation.
pub fn lstsq_multi(x: &DMatrix<f64>, y: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    if x.ncols() == 0 {
        return (DMatrix::zeros(0, y.ncols()), 0);
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = smax * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let beta = svd
        .solve(y, tol)
        .unwrap_or_else(|_| DMatrix::zeros(x.ncols(), y.ncols()));
    (beta, rank)
}

/// Solves `a * x = b` for symmetric positive (semi-)definite `a`, falling
/// back to a pseudo-inverse when Cholesky fails.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = a.clone().cholesky() {
        return ch.solve(b);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.solve(b, smax * 1e-12)
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), b.ncols()))
}

pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Inverse and log-determinant of a symmetric positive definite matrix.
pub fn spd_inverse_logdet(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let ch = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("matrix not positive definite"))?;
    let logdet = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok((ch.inverse(), logdet))
}

/// Solves the discrete Lyapunov equation `P = A P Aᵀ + Q` by doubling.
pub fn discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = q.clone();
    let mut ak = a.clone();
    for _ in 0..60 {
        let next = &p + &ak * &p * ak.transpose();
        ak = &ak * &ak;
        let delta = (&next - &p).abs().max();
        p = next;
        if delta < 1e-14 * (1.0 + p.abs().max()) {
            break;
        }
    }
    symmetrize(&p)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance (divisor n).
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstsq_exact_line() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let (b, rank) = lstsq(&x, &y);
        assert_eq!(rank, 2);
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lstsq_min_norm_on_duplicate_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![2.0, 4.0, 6.0]);
        let (b, rank) = lstsq(&x, &y);
        assert_eq!(rank, 1);
        assert!((b[0] - 1.0).abs() < 1e-10 && (b[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let q = DMatrix::from_element(1, 1, 1.0);
        let p = discrete_lyapunov(&a, &q);
        assert!((p[(0, 0)] - 1.0 / 0.75).abs() < 1e-12);
    }
}
