//! OLS and ridge regression on a design matrix.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    /// Ridge penalty; 0 for OLS.
    pub alpha: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|r| {
                let row: Vec<f64> = x.row(r).iter().copied().collect();
                self.predict_row(&row)
            })
            .collect()
    }
}

fn check_shape(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    if x.nrows() < 2 {
        return Err(Error::invalid("linear regression needs at least 2 rows"));
    }
    Ok(())
}

/// Least squares with an intercept via SVD. Rank-deficient systems get the
/// minimum-norm solution and a warning.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64]) -> Result<LinearModel> {
    check_shape(x, y)?;
    let (n, k) = x.shape();
    let design = DMatrix::from_fn(n, k + 1, |r, c| if c == 0 { 1.0 } else { x[(r, c - 1)] });
    let (beta, rank) = linalg::lstsq(&design, &DVector::from_column_slice(y));
    if rank < k + 1 {
        warn!("OLS design is rank deficient ({rank} < {}); using minimum-norm solution", k + 1);
    }
    Ok(LinearModel {
        intercept: beta[0],
        coef: beta.iter().skip(1).copied().collect(),
        alpha: 0.0,
    })
}

/// Solves `(XcᵀXc + αI)β = Xcᵀyc` on column-centered data; the intercept is
/// unpenalized.
pub fn ridge_fit(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<LinearModel> {
    check_shape(x, y)?;
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("ridge alpha must be finite and non-negative, got {alpha}")));
    }
    let (n, k) = x.shape();
    let x_means: Vec<f64> = (0..k).map(|c| x.column(c).mean()).collect();
    let y_mean = linalg::mean(y);
    let xc = DMatrix::from_fn(n, k, |r, c| x[(r, c)] - x_means[c]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let beta = if alpha == 0.0 {
        linalg::lstsq(&xc, &yc).0
    } else {
        let mut gram = xc.transpose() * &xc;
        for i in 0..k {
            gram[(i, i)] += alpha;
        }
        let rhs = xc.transpose() * yc;
        linalg::solve_spd(&gram, &DMatrix::from_column_slice(k, 1, rhs.as_slice())).column(0).into_owned()
    };
    let intercept = y_mean - beta.iter().zip(&x_means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel {
        intercept,
        coef: beta.iter().copied().collect(),
        alpha,
    })
}
