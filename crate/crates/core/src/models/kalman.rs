//! Linear Gaussian state space with missing observations.
//!
//! `x_t = A x_{t-1} + w_t`, `y_t = C x_t + v_t`, `w ~ N(0, Q)`,
//! `v ~ N(0, diag(r))`, `x_0 ~ N(x0, P0)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Diagonal of the observation noise covariance.
    pub r: DVector<f64>,
    pub x0: DVector<f64>,
    pub p0: DMatrix<f64>,
}

impl StateSpace {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        let m = self.n_obs();
        let ok = self.a.shape() == (n, n)
            && self.c.ncols() == n
            && self.q.shape() == (n, n)
            && self.r.len() == m
            && self.x0.len() == n
            && self.p0.shape() == (n, n);
        if !ok {
            return Err(Error::invalid("state-space dimensions are inconsistent"));
        }
        if self.r.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("observation variances must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub x_pred: Vec<DVector<f64>>,
    pub p_pred: Vec<DMatrix<f64>>,
    pub x_filt: Vec<DVector<f64>>,
    pub p_filt: Vec<DMatrix<f64>>,
    pub loglik: f64,
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub x: Vec<DVector<f64>>,
    pub p: Vec<DMatrix<f64>>,
    /// `lag[t] = Cov(x_t, x_{t-1} | all data)`; `lag[0]` is zero.
    pub lag: Vec<DMatrix<f64>>,
}

/// Forward pass. Missing cells delete their rows of the observation
/// equation; an all-missing step only predicts.
pub fn kalman_filter(ss: &StateSpace, obs: &[Vec<Option<f64>>]) -> Result<FilterOutput> {
    ss.validate()?;
    let m = ss.n_obs();
    if let Some(row) = obs.iter().find(|r| r.len() != m) {
        return Err(Error::invalid(format!("observation row has {} cells, model has {m}", row.len())));
    }
    let t_len = obs.len();
    let mut out = FilterOutput {
        x_pred: Vec::with_capacity(t_len),
        p_pred: Vec::with_capacity(t_len),
        x_filt: Vec::with_capacity(t_len),
        p_filt: Vec::with_capacity(t_len),
        loglik: 0.0,
    };
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let at = ss.a.transpose();
    for (t, row) in obs.iter().enumerate() {
        let (xp, pp) = if t == 0 {
            (ss.x0.clone(), ss.p0.clone())
        } else {
            let xf = &out.x_filt[t - 1];
            let pf = &out.p_filt[t - 1];
            (&ss.a * xf, linalg::symmetrize(&(&ss.a * pf * &at + &ss.q)))
        };
        let idx: Vec<usize> = (0..m).filter(|&i| row[i].is_some()).collect();
        let (xf, pf) = if idx.is_empty() {
            (xp.clone(), pp.clone())
        } else {
            let co = ss.c.select_rows(&idx);
            let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| row[i].unwrap()));
            let v = &y - &co * &xp;
            let pct = &pp * co.transpose();
            let mut s = &co * &pct;
            for (k, &i) in idx.iter().enumerate() {
                s[(k, k)] += ss.r[i];
            }
            let s = linalg::symmetrize(&s);
            let ch = s
                .clone()
                .cholesky()
                .ok_or_else(|| Error::numerical(format!("innovation covariance not positive definite at step {t}")))?;
            let logdet = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let s_inv_v = ch.solve(&v);
            out.loglik -= 0.5 * (idx.len() as f64 * ln2pi + logdet + v.dot(&s_inv_v));
            // K = P Cᵀ S⁻¹
            let k = ch.solve(&pct.transpose()).transpose();
            let xf = &xp + &k * v;
            let pf = linalg::symmetrize(&(&pp - &k * pct.transpose()));
            (xf, pf)
        };
        out.x_pred.push(xp);
        out.p_pred.push(pp);
        out.x_filt.push(xf);
        out.p_filt.push(pf);
    }
    Ok(out)
}

/// Rauch–Tung–Striebel backward pass with lag-one covariances.
pub fn kalman_smoother(ss: &StateSpace, f: &FilterOutput) -> SmootherOutput {
    let t_len = f.x_filt.len();
    let n = ss.n_states();
    let mut x = f.x_filt.clone();
    let mut p = f.p_filt.clone();
    let mut lag = vec![DMatrix::zeros(n, n); t_len];
    for t in (0..t_len.saturating_sub(1)).rev() {
        // J = P_{t|t} Aᵀ P_{t+1|t}⁻¹
        let j = linalg::solve_spd(&f.p_pred[t + 1], &(&ss.a * &f.p_filt[t])).transpose();
        let dx = &x[t + 1] - &f.x_pred[t + 1];
        x[t] = &f.x_filt[t] + &j * dx;
        let dp = &p[t + 1] - &f.p_pred[t + 1];
        p[t] = linalg::symmetrize(&(&f.p_filt[t] + &j * dp * j.transpose()));
        lag[t + 1] = &p[t + 1] * j.transpose();
    }
    SmootherOutput { x, p, lag }
}
