//! Vector autoregressions on the stacked quarterly representation: OLS
//! (MF-VAR) and a Minnesota-prior Bayesian VAR.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub p: usize,
    /// `coefs[l]` multiplies `y_{t-l-1}`; each is k × k.
    pub coefs: Vec<DMatrix<f64>>,
    pub intercept: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Set when too few rows forced a ridge-stabilized solve.
    pub ridge_stabilized: bool,
}

impl VarModel {
    pub fn k(&self) -> usize {
        self.intercept.len()
    }

    /// One-step conditional mean given `history` (rows oldest first).
    pub fn step_mean(&self, history: &[DVector<f64>]) -> DVector<f64> {
        let mut m = self.intercept.clone();
        for (l, a) in self.coefs.iter().enumerate() {
            m += a * &history[history.len() - 1 - l];
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinnesotaPrior {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Prior mean of each variable's own first lag.
    pub delta: f64,
    /// Inverse-Wishart degrees of freedom; `None` uses k + 2.
    pub iw_dof: Option<f64>,
}

impl Default for MinnesotaPrior {
    fn default() -> Self {
        MinnesotaPrior {
            lambda1: 0.2,
            lambda2: 0.5,
            lambda3: 1.0,
            delta: 0.0,
            iw_dof: None,
        }
    }
}

impl MinnesotaPrior {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.lambda1 > 0.0) || !(self.lambda2 > 0.0 && self.lambda2 <= 1.0) || !(self.lambda3 >= 0.0) {
            return Err(Error::invalid(format!("invalid Minnesota prior {self:?}")));
        }
        if let Some(d) = self.iw_dof {
            if !(d > k as f64 + 1.0) {
                return Err(Error::invalid(format!("inverse-Wishart dof {d} must exceed {}", k + 1)));
            }
        }
        Ok(())
    }
}

/// Regressors `[1, y_{t-1}, …, y_{t-p}]` and targets `y_t` for t ≥ p.
fn lagged(y: &DMatrix<f64>, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (t, k) = y.shape();
    let rows = t - p;
    let x = DMatrix::from_fn(rows, 1 + k * p, |r, c| {
        if c == 0 {
            1.0
        } else {
            let (l, j) = ((c - 1) / k, (c - 1) % k);
            y[(r + p - 1 - l, j)]
        }
    });
    let target = y.rows(p, rows).into_owned();
    (x, target)
}

fn unpack(beta: &DMatrix<f64>, k: usize, p: usize) -> (DVector<f64>, Vec<DMatrix<f64>>) {
    // beta is (1 + kp) × k, one column per equation.
    let intercept = beta.row(0).transpose();
    let coefs = (0..p)
        .map(|l| beta.rows(1 + l * k, k).transpose())
        .collect();
    (intercept, coefs)
}

fn check_input(y: &DMatrix<f64>, p: usize) -> Result<()> {
    if y.ncols() == 0 {
        return Err(Error::invalid("VAR needs at least one variable"));
    }
    if y.nrows() <= p + 1 {
        return Err(Error::invalid(format!("VAR({p}) needs more than {} rows, got {}", p + 1, y.nrows())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("VAR input must be finite"));
    }
    Ok(())
}

/// Per-equation least squares. With too few rows the normal equations get
/// a small ridge term and a warning.
pub fn var_fit(y: &DMatrix<f64>, p: usize) -> Result<VarModel> {
    check_input(y, p)?;
    let k = y.ncols();
    let (x, target) = lagged(y, p);
    let n_par = 1 + k * p;
    let degenerate = x.nrows() <= n_par;
    let beta = if degenerate {
        warn!("VAR({p}) with {k} variables has {} rows for {n_par} parameters; ridge-stabilized", x.nrows());
        let mut gram = x.transpose() * &x;
        let eps = 1e-6 * (gram.trace() / n_par as f64).max(1e-12);
        for i in 1..n_par {
            gram[(i, i)] += eps;
        }
        linalg::solve_spd(&gram, &(x.transpose() * &target))
    } else {
        linalg::lstsq_multi(&x, &target).0
    };
    let resid = &target - &x * &beta;
    let dof = if degenerate { x.nrows() as f64 } else { (x.nrows() - n_par) as f64 };
    let sigma = linalg::symmetrize(&(resid.transpose() * &resid / dof.max(1.0)));
    let (intercept, coefs) = unpack(&beta, k, p);
    Ok(VarModel {
        p,
        coefs,
        intercept,
        sigma,
        ridge_stabilized: degenerate,
    })
}

/// Residual variance of a univariate AR(p) by OLS, used to scale the prior.
fn ar_residual_variance(y: &[f64], p: usize) -> f64 {
    let n = y.len();
    let p = p.min(n.saturating_sub(3) / 2);
    let rows = n - p;
    let x = DMatrix::from_fn(rows, 1 + p, |r, c| if c == 0 { 1.0 } else { y[r + p - c] });
    let t = DVector::from_iterator(rows, y[p..].iter().copied());
    let (b, _) = linalg::lstsq(&x, &t);
    let resid = &t - &x * b;
    let dof = rows.saturating_sub(1 + p).max(1) as f64;
    let v = resid.norm_squared() / dof;
    if v > 1e-12 {
        v
    } else {
        linalg::variance(y).max(1e-8)
    }
}

/// Equation-wise Minnesota posterior mean. The prior variance of the
/// coefficient on variable j at lag l in equation i is
/// `λ₁² · w · (σᵢ²/σⱼ²) · l^(−2λ₃)`, with `w = λ₂` for j ≠ i and 1 otherwise;
/// the intercept prior is flat. Σ is the inverse-Wishart posterior mean.
pub fn bvar_fit(y: &DMatrix<f64>, p: usize, prior: &MinnesotaPrior) -> Result<VarModel> {
    check_input(y, p)?;
    let k = y.ncols();
    prior.validate(k)?;
    let (x, target) = lagged(y, p);
    let n_par = 1 + k * p;
    let s2: Vec<f64> = (0..k)
        .map(|j| {
            let col: Vec<f64> = y.column(j).iter().copied().collect();
            ar_residual_variance(&col, p.max(1))
        })
        .collect();
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &target;

    let columns: Vec<DVector<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut a = &xtx / s2[i];
            let mut rhs = xty.column(i) / s2[i];
            for c in 1..n_par {
                let (l, j) = ((c - 1) / k + 1, (c - 1) % k);
                let w = if j == i { 1.0 } else { prior.lambda2 };
                let var = prior.lambda1.powi(2) * w * (s2[i] / s2[j]) * (l as f64).powf(-2.0 * prior.lambda3);
                let prec = 1.0 / var;
                a[(c, c)] += prec;
                if l == 1 && j == i {
                    rhs[c] += prec * prior.delta;
                }
            }
            linalg::solve_spd(&a, &DMatrix::from_column_slice(n_par, 1, rhs.as_slice()))
                .column(0)
                .into_owned()
        })
        .collect();
    let beta = DMatrix::from_columns(&columns);
    let resid = &target - &x * &beta;
    let nu0 = prior.iw_dof.unwrap_or(k as f64 + 2.0);
    let scale0 = DMatrix::from_diagonal(&DVector::from_iterator(k, s2.iter().map(|v| v * (nu0 - k as f64 - 1.0))));
    let nu = nu0 + x.nrows() as f64;
    let sigma = linalg::symmetrize(&((scale0 + resid.transpose() * &resid) / (nu - k as f64 - 1.0)));
    let (intercept, coefs) = unpack(&beta, k, p);
    Ok(VarModel {
        p,
        coefs,
        intercept,
        sigma,
        ridge_stabilized: false,
    })
}

/// Iterated forecasts for steps 1..=h from `history` (≥ p rows).
pub fn var_forecast(model: &VarModel, history: &DMatrix<f64>, h: usize) -> Result<Vec<DVector<f64>>> {
    if history.nrows() < model.p {
        return Err(Error::invalid(format!("history has {} rows, VAR({}) needs {}", history.nrows(), model.p, model.p)));
    }
    let mut hist: Vec<DVector<f64>> = (0..history.nrows()).map(|r| history.row(r).transpose()).collect();
    let mut out = Vec::with_capacity(h);
    for _ in 0..h {
        let next = model.step_mean(&hist);
        hist.push(next.clone());
        out.push(next);
    }
    Ok(out)
}

/// Gaussian conditioning of a one-step prediction `mean` (covariance Σ) on
/// the components present in `observed`; returns the completed vector.
pub fn condition_on(mean: &DVector<f64>, sigma: &DMatrix<f64>, observed: &[Option<f64>]) -> DVector<f64> {
    let obs: Vec<usize> = (0..mean.len()).filter(|&i| observed[i].is_some()).collect();
    let mis: Vec<usize> = (0..mean.len()).filter(|&i| observed[i].is_none()).collect();
    let mut out = mean.clone();
    for &i in &obs {
        out[i] = observed[i].unwrap();
    }
    if obs.is_empty() || mis.is_empty() {
        return out;
    }
    let s_oo = DMatrix::from_fn(obs.len(), obs.len(), |a, b| sigma[(obs[a], obs[b])]);
    let s_mo = DMatrix::from_fn(mis.len(), obs.len(), |a, b| sigma[(mis[a], obs[b])]);
    let innov = DMatrix::from_fn(obs.len(), 1, |a, _| observed[obs[a]].unwrap() - mean[obs[a]]);
    let adj = s_mo * linalg::solve_spd(&s_oo, &innov);
    for (a, &i) in mis.iter().enumerate() {
        out[i] += adj[(a, 0)];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn simulate_var1(a: &DMatrix<f64>, c: &DVector<f64>, t: usize, seed: u64) -> DMatrix<f64> {
        let k = c.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = DMatrix::zeros(t + 100, k);
        let mut prev = DVector::zeros(k);
        for r in 0..t + 100 {
            let e = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            let next: DVector<f64> = c + a * &prev + e;
            y.set_row(r, &next.transpose());
            prev = next;
        }
        y.rows(100, t).into_owned()
    }

    fn stable_a() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3])
    }

    #[test]
    fn white_noise_small_coefficients() {
        let y = simulate_var1(&DMatrix::zeros(2, 2), &DVector::zeros(2), 2000, 1);
        let m = var_fit(&y, 1).unwrap();
        assert!(m.coefs[0].amax() < 0.1);
    }

    #[test]
    fn recovers_var1() {
        let y = simulate_var1(&stable_a(), &DVector::from_vec(vec![0.1, -0.2]), 5000, 2);
        let m = var_fit(&y, 1).unwrap();
        assert!((&m.coefs[0] - stable_a()).amax() < 0.05);
        assert!(!m.ridge_stabilized);
    }

    #[test]
    fn zero_lags_forecast_means() {
        let y = simulate_var1(&stable_a(), &DVector::from_vec(vec![1.0, 2.0]), 300, 3);
        let m = var_fit(&y, 0).unwrap();
        let f = var_forecast(&m, &y, 3).unwrap();
        for (j, v) in f[2].iter().enumerate() {
            assert!((v - y.column(j).mean()).abs() < 1e-10);
        }
    }

    #[test]
    fn var1_step_and_fixed_point() {
        let y = simulate_var1(&stable_a(), &DVector::from_vec(vec![0.3, 0.1]), 500, 4);
        let m = var_fit(&y, 1).unwrap();
        let f = var_forecast(&m, &y, 400).unwrap();
        let last = y.row(y.nrows() - 1).transpose();
        let one = &m.intercept + &m.coefs[0] * last;
        assert!((&f[0] - one).amax() < 1e-12);
        let fixed = (DMatrix::identity(2, 2) - &m.coefs[0]).try_inverse().unwrap() * &m.intercept;
        assert!((&f[399] - fixed).amax() < 1e-6);
    }

    #[test]
    fn equations_match_ols() {
        let y = simulate_var1(&stable_a(), &DVector::from_vec(vec![0.3, 0.1]), 200, 5);
        let m = var_fit(&y, 2).unwrap();
        let (x, target) = lagged(&y, 2);
        let regressors = x.columns(1, x.ncols() - 1).into_owned();
        for i in 0..2 {
            let t: Vec<f64> = target.column(i).iter().copied().collect();
            let ols = linear::ols_fit(&regressors, &t).unwrap();
            assert!((ols.intercept - m.intercept[i]).abs() < 1e-10);
            for l in 0..2 {
                for j in 0..2 {
                    assert!((ols.coef[l * 2 + j] - m.coefs[l][(i, j)]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn bvar_tight_prior_hits_prior_mean() {
        let y = simulate_var1(&stable_a(), &DVector::zeros(2), 200, 6);
        let prior = MinnesotaPrior {
            lambda1: 1e-8,
            delta: 0.4,
            ..MinnesotaPrior::default()
        };
        let m = bvar_fit(&y, 2, &prior).unwrap();
        let mut expected = DMatrix::zeros(2, 2);
        expected.fill_diagonal(0.4);
        assert!((&m.coefs[0] - expected).amax() < 1e-6);
        assert!(m.coefs[1].amax() < 1e-6);
    }

    #[test]
    fn bvar_flat_prior_matches_ols() {
        let y = simulate_var1(&stable_a(), &DVector::from_vec(vec![0.2, 0.0]), 2000, 7);
        let prior = MinnesotaPrior {
            lambda1: 1e6,
            lambda2: 1.0,
            ..MinnesotaPrior::default()
        };
        let b = bvar_fit(&y, 2, &prior).unwrap();
        let o = var_fit(&y, 2).unwrap();
        for l in 0..2 {
            assert!((&b.coefs[l] - &o.coefs[l]).amax() < 1e-4);
        }
        assert!((&b.intercept - &o.intercept).amax() < 1e-4);
    }

    #[test]
    fn bvar_shrinkage_monotone_scalar() {
        let y = simulate_var1(&DMatrix::from_element(1, 1, 0.7), &DVector::zeros(1), 150, 8);
        let mut prev = 0.0;
        for l1 in [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0] {
            let prior = MinnesotaPrior {
                lambda1: l1,
                ..MinnesotaPrior::default()
            };
            let a = bvar_fit(&y, 1, &prior).unwrap().coefs[0][(0, 0)];
            assert!(a >= prev - 1e-12, "{a} < {prev}");
            prev = a;
        }
    }

    #[test]
    fn underdetermined_systems() {
        let a = DMatrix::from_diagonal_element(6, 6, 0.3);
        let c = DVector::zeros(6);
        // 6 variables, T = 40, p = 4.
        let y = simulate_var1(&a, &c, 40, 9);
        let m = bvar_fit(&y, 4, &MinnesotaPrior::default()).unwrap();
        assert!(m.coefs.iter().all(|a| a.iter().all(|v| v.is_finite())));
        // 6 variables, T = 20, p = 4: 16 rows for 25 parameters.
        let y = simulate_var1(&a, &c, 20, 10);
        assert!(var_fit(&y, 4).unwrap().ridge_stabilized);
        let m = bvar_fit(&y, 4, &MinnesotaPrior::default()).unwrap();
        assert!(m.coefs.iter().all(|a| a.iter().all(|v| v.is_finite())));
        assert!(m.sigma.clone().cholesky().is_some());
    }

    #[test]
    fn prior_validation() {
        let bad = MinnesotaPrior {
            iw_dof: Some(3.0),
            ..MinnesotaPrior::default()
        };
        assert!(bad.validate(2).is_err());
        assert!(MinnesotaPrior::default().validate(50).is_ok());
    }

    #[test]
    fn conditioning_matches_bivariate_formula() {
        let mean = DVector::from_vec(vec![1.0, 2.0]);
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let out = condition_on(&mean, &sigma, &[None, Some(3.0)]);
        assert!((out[0] - (1.0 + 0.6 * 1.0)).abs() < 1e-12);
        assert_eq!(out[1], 3.0);
    }
}
