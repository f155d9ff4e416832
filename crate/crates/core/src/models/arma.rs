//! Univariate ARMA(p, q) with conditional-sum-of-squares estimation and
//! AIC order search.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{self, Options};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaModel {
    pub p: usize,
    pub q: usize,
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sigma2: f64,
    pub loglik: f64,
    pub aic: f64,
    /// Observations conditioned on (excluded from the sum of squares).
    pub n_cond: usize,
}

impl ArmaModel {
    /// Long-run mean `c / (1 - Σφ)`.
    pub fn unconditional_mean(&self) -> f64 {
        self.intercept / (1.0 - self.ar.iter().sum::<f64>())
    }

    fn params(&self) -> Vec<f64> {
        let mut v = vec![self.intercept];
        v.extend(&self.ar);
        v.extend(&self.ma);
        v
    }
}

/// Residuals of the CSS recursion; residuals before `n_cond` are zero.
fn css_residuals(y: &[f64], c: f64, ar: &[f64], ma: &[f64], n_cond: usize) -> Vec<f64> {
    let mut e = vec![0.0; y.len()];
    for t in n_cond..y.len() {
        let mut pred = c;
        for (i, phi) in ar.iter().enumerate() {
            pred += phi * y[t - 1 - i];
        }
        for (j, psi) in ma.iter().enumerate() {
            if t > j {
                pred += psi * e[t - 1 - j];
            }
        }
        e[t] = y[t] - pred;
    }
    e
}

/// `1 - Σ a_i z^i` has all roots outside the unit circle.
pub fn is_stationary(ar: &[f64]) -> bool {
    max_root_modulus(ar) < 1.0 - 1e-10
}

fn is_invertible(ma: &[f64]) -> bool {
    let neg: Vec<f64> = ma.iter().map(|m| -m).collect();
    max_root_modulus(&neg) < 1.0 - 1e-10
}

fn max_root_modulus(a: &[f64]) -> f64 {
    match a.len() {
        0 => 0.0,
        1 => a[0].abs(),
        n => {
            let mut comp = DMatrix::zeros(n, n);
            for (j, v) in a.iter().enumerate() {
                comp[(0, j)] = *v;
            }
            for i in 1..n {
                comp[(i, i - 1)] = 1.0;
            }
            comp.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
        }
    }
}

fn split_params(x: &[f64], p: usize) -> (f64, &[f64], &[f64]) {
    (x[0], &x[1..1 + p], &x[1 + p..])
}

fn css(y: &[f64], x: &[f64], p: usize, n_cond: usize) -> f64 {
    let (c, ar, ma) = split_params(x, p);
    if !is_stationary(ar) || !is_invertible(ma) {
        return f64::INFINITY;
    }
    css_residuals(y, c, ar, ma, n_cond)[n_cond..]
        .iter()
        .map(|e| e * e)
        .sum()
}

/// Conditional least squares for a pure AR(p): exact CSS minimizer.
fn ar_ols(y: &[f64], p: usize, n_cond: usize) -> Vec<f64> {
    let rows = y.len() - n_cond;
    let mut x = DMatrix::zeros(rows, p + 1);
    let mut target = DVector::zeros(rows);
    for (r, t) in (n_cond..y.len()).enumerate() {
        x[(r, 0)] = 1.0;
        for i in 0..p {
            x[(r, i + 1)] = y[t - 1 - i];
        }
        target[r] = y[t];
    }
    linalg::lstsq(&x, &target).0.iter().copied().collect()
}

/// Hannan–Rissanen starting values: long AR for residuals, then a linear
/// regression on lagged values and lagged residuals.
fn hannan_rissanen(y: &[f64], p: usize, q: usize, n_cond: usize) -> Vec<f64> {
    let n = y.len();
    let long = (p + q + 4).max(8).min(n / 4).max(1);
    let coef = ar_ols(y, long, long);
    let resid = css_residuals(y, coef[0], &coef[1..], &[], long);
    let start = n_cond.max(long + q);
    let rows = n.saturating_sub(start);
    if rows <= p + q + 1 {
        let mut v = vec![linalg::mean(y)];
        v.extend(std::iter::repeat_n(0.0, p + q));
        return v;
    }
    let mut x = DMatrix::zeros(rows, 1 + p + q);
    let mut target = DVector::zeros(rows);
    for (r, t) in (start..n).enumerate() {
        x[(r, 0)] = 1.0;
        for i in 0..p {
            x[(r, 1 + i)] = y[t - 1 - i];
        }
        for j in 0..q {
            x[(r, 1 + p + j)] = resid[t - 1 - j];
        }
        target[r] = y[t];
    }
    linalg::lstsq(&x, &target).0.iter().copied().collect()
}

fn finish(y: &[f64], p: usize, q: usize, n_cond: usize, x: &[f64]) -> Result<ArmaModel> {
    let n_eff = (y.len() - n_cond) as f64;
    let ss = css(y, x, p, n_cond);
    let sigma2 = ss / n_eff;
    let scale = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    if !(sigma2 > 1e-20 * scale.max(1e-300)) || !sigma2.is_finite() {
        return Err(Error::NonConvergence(format!(
            "ARMA({p},{q}): innovation variance {sigma2} not positive"
        )));
    }
    let loglik = -0.5 * n_eff * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    let k = (p + q + 2) as f64;
    let (c, ar, ma) = split_params(x, p);
    Ok(ArmaModel {
        p,
        q,
        intercept: c,
        ar: ar.to_vec(),
        ma: ma.to_vec(),
        sigma2,
        loglik,
        aic: 2.0 * k - 2.0 * loglik,
        n_cond,
    })
}

/// CSS fit conditioning on the first `n_cond ≥ p` observations, optionally
/// warm-started.
pub fn fit_arma_with(y: &[f64], p: usize, q: usize, n_cond: usize, start: Option<&[f64]>) -> Result<ArmaModel> {
    let need = 10 * (p + q + 1);
    if y.len() < need {
        return Err(Error::invalid(format!(
            "ARMA({p},{q}) needs at least {need} observations, got {}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("ARMA input must be finite and non-missing"));
    }
    let n_cond = n_cond.max(p);

    if q == 0 {
        let x = ar_ols(y, p, n_cond);
        if is_stationary(&x[1..]) {
            return finish(y, p, q, n_cond, &x);
        }
    }

    let x0 = match start {
        Some(s) if s.len() == 1 + p + q => s.to_vec(),
        _ => hannan_rissanen(y, p, q, n_cond),
    };
    let mut u0 = to_unconstrained(&x0, p);
    let opts = Options {
        max_evals: 4000 * (p + q + 1),
        initial_step: 0.05,
        ..Options::default()
    };
    let objective = |u: &[f64]| css(y, &to_constrained(u, p), p, n_cond);
    for _attempt in 0..3 {
        let m = optim::minimize(objective, &u0, &opts);
        if m.fx.is_finite() && m.converged {
            return finish(y, p, q, n_cond, &to_constrained(&m.x, p));
        }
        u0 = m.x;
    }
    Err(Error::NonConvergence(format!("ARMA({p},{q}) CSS search")))
}

/// Partial autocorrelations in (−1, 1) to coefficients of a stationary AR
/// polynomial (Durbin–Levinson).
fn pacf_to_ar(r: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(r.len());
    for (k, &rk) in r.iter().enumerate() {
        let prev = a.clone();
        for j in 0..k {
            a[j] = prev[j] - rk * prev[k - 1 - j];
        }
        a.push(rk);
    }
    a
}

/// Inverse of [`pacf_to_ar`]; coefficients outside the stationary region
/// are shrunk until they map inside.
fn ar_to_pacf(a: &[f64]) -> Vec<f64> {
    let mut a = a.to_vec();
    while !is_stationary(&a) {
        a.iter_mut().for_each(|v| *v *= 0.9);
    }
    let mut r = vec![0.0; a.len()];
    for k in (0..a.len()).rev() {
        let rk = a[k];
        r[k] = rk;
        let denom = 1.0 - rk * rk;
        let prev: Vec<f64> = (0..k).map(|j| (a[j] + rk * a[k - 1 - j]) / denom).collect();
        a = prev;
    }
    r
}

/// MA partial autocorrelations are capped just inside the unit interval.
const MA_PACF_CAP: f64 = 0.999;

fn to_constrained(u: &[f64], p: usize) -> Vec<f64> {
    let r_ar: Vec<f64> = u[1..1 + p].iter().map(|v| v.tanh()).collect();
    let r_ma: Vec<f64> = u[1 + p..].iter().map(|v| MA_PACF_CAP * v.tanh()).collect();
    let mut x = vec![u[0]];
    x.extend(pacf_to_ar(&r_ar));
    x.extend(pacf_to_ar(&r_ma).into_iter().map(|v| -v));
    x
}

fn to_unconstrained(x: &[f64], p: usize) -> Vec<f64> {
    let clamp = |r: f64| r.clamp(-0.99, 0.99).atanh();
    let neg_ma: Vec<f64> = x[1 + p..].iter().map(|v| -v).collect();
    let mut u = vec![x[0]];
    u.extend(ar_to_pacf(&x[1..1 + p]).into_iter().map(clamp));
    u.extend(ar_to_pacf(&neg_ma).into_iter().map(|r| clamp(r / MA_PACF_CAP)));
    u
}

/// CSS fit of ARMA(p, q), conditioning on the first `p` observations.
pub fn fit_arma(y: &[f64], p: usize, q: usize) -> Result<ArmaModel> {
    fit_arma_with(y, p, q, p, None)
}

/// Refit with fixed orders, warm-started from an earlier model.
pub fn refit(model: &ArmaModel, y: &[f64]) -> Result<ArmaModel> {
    fit_arma_with(y, model.p, model.q, model.p, Some(&model.params()))
}

/// Exhaustive AIC search over `0..=p_max × 0..=q_max`. Every candidate
/// conditions on the same `p_max` observations so AICs are comparable.
pub fn auto_order(y: &[f64], p_max: usize, q_max: usize) -> Result<(usize, usize)> {
    auto_fit(y, p_max, q_max).map(|m| (m.p, m.q))
}

pub fn auto_fit(y: &[f64], p_max: usize, q_max: usize) -> Result<ArmaModel> {
    let grid: Vec<(usize, usize)> = (0..=p_max)
        .flat_map(|p| (0..=q_max).map(move |q| (p, q)))
        .collect();
    let fits: Vec<Result<ArmaModel>> = grid
        .par_iter()
        .map(|&(p, q)| fit_arma_with(y, p, q, p_max, None))
        .collect();
    let mut best: Option<ArmaModel> = None;
    let mut causes = Vec::new();
    for (fit, (p, q)) in fits.into_iter().zip(&grid) {
        match fit {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.aic < b.aic) {
                    best = Some(m);
                }
            }
            Err(e) => causes.push(format!("({p},{q}): {e}")),
        }
    }
    best.ok_or_else(|| Error::NonConvergence(format!("every ARMA candidate failed: {}", causes.join("; "))))
}

/// Iterated conditional-expectation forecasts `ŷ_{T+1..T+h}`. MA terms use
/// in-sample residuals of `y`, zero beyond the sample.
pub fn forecast(model: &ArmaModel, y: &[f64], h: usize) -> Vec<f64> {
    let n_cond = model.p.min(y.len());
    let resid = css_residuals(y, model.intercept, &model.ar, &model.ma, n_cond);
    let mut hist: Vec<f64> = y.to_vec();
    let mut errs: Vec<f64> = resid;
    let mut out = Vec::with_capacity(h);
    for _ in 0..h {
        let t = hist.len();
        let mut v = model.intercept;
        for (i, phi) in model.ar.iter().enumerate() {
            if t > i {
                v += phi * hist[t - 1 - i];
            }
        }
        for (j, psi) in model.ma.iter().enumerate() {
            if t > j {
                v += psi * errs[t - 1 - j];
            }
        }
        hist.push(v);
        errs.push(0.0);
        out.push(v);
    }
    out
}

/// Simulates an ARMA path after a burn-in of 200 draws.
pub fn simulate<R: Rng>(c: f64, ar: &[f64], ma: &[f64], sigma: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let burn = 200;
    let mut y = vec![0.0; n + burn];
    let mut e = vec![0.0; n + burn];
    for t in 0..n + burn {
        let eps: f64 = StandardNormal.sample(rng);
        e[t] = sigma * eps;
        let mut v = c + e[t];
        for (i, phi) in ar.iter().enumerate() {
            if t > i {
                v += phi * y[t - 1 - i];
            }
        }
        for (j, psi) in ma.iter().enumerate() {
            if t > j {
                v += psi * e[t - 1 - j];
            }
        }
        y[t] = v;
    }
    y.split_off(burn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn ar1_recovery() {
        let y = simulate(0.0, &[0.8], &[], 1.0, 2000, &mut rng(1));
        let m = fit_arma(&y, 1, 0).unwrap();
        assert!((0.7..=0.9).contains(&m.ar[0]), "{}", m.ar[0]);
    }

    #[test]
    fn arma11_recovery() {
        let y = simulate(0.5, &[0.6], &[0.3], 1.0, 3000, &mut rng(2));
        let m = fit_arma(&y, 1, 1).unwrap();
        assert!((m.ar[0] - 0.6).abs() < 0.1, "{:?}", m);
        assert!((m.ma[0] - 0.3).abs() < 0.1, "{:?}", m);
    }

    #[test]
    fn zero_order_is_mean_and_variance() {
        let y: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let m = fit_arma(&y, 0, 0).unwrap();
        assert!((m.intercept - linalg::mean(&y)).abs() < 1e-12);
        assert!((m.sigma2 - linalg::variance(&y)).abs() < 1e-10);
        assert_eq!(m.aic, 2.0 * 2.0 - 2.0 * m.loglik);
    }

    #[test]
    fn constant_series_errors() {
        assert!(fit_arma(&[3.0; 40], 0, 0).is_err());
    }

    #[test]
    fn short_series_rejected() {
        assert!(fit_arma(&[1.0, 2.0, 3.0], 1, 1).is_err());
    }

    #[test]
    fn forecast_closed_forms() {
        let white = ArmaModel {
            p: 0,
            q: 0,
            intercept: 0.7,
            ar: vec![],
            ma: vec![],
            sigma2: 1.0,
            loglik: 0.0,
            aic: 0.0,
            n_cond: 0,
        };
        assert_eq!(forecast(&white, &[1.0, 2.0], 3), vec![0.7; 3]);

        let ar1 = ArmaModel {
            p: 1,
            intercept: 0.0,
            ar: vec![0.8],
            ..white.clone()
        };
        let f = forecast(&ar1, &[0.3, 1.0], 2);
        assert!((f[0] - 0.8).abs() < 1e-15);
        assert!((f[1] - 0.64).abs() < 1e-15);

        let ar1c = ArmaModel {
            intercept: 0.5,
            ..ar1
        };
        let f = forecast(&ar1c, &[0.3, 2.0], 1);
        assert!((f[0] - (0.5 + 0.8 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn long_horizon_converges_to_unconditional_mean() {
        let y = simulate(0.4, &[0.5, 0.2], &[0.3], 1.0, 800, &mut rng(3));
        let m = fit_arma(&y, 2, 1).unwrap();
        let f = forecast(&m, &y, 400);
        assert!((f[399] - m.unconditional_mean()).abs() < 1e-6);
    }

    #[test]
    fn css_optimum_is_coordinate_minimum() {
        let y = simulate(0.1, &[0.5], &[0.4], 1.0, 600, &mut rng(4));
        let m = fit_arma(&y, 1, 1).unwrap();
        let x = m.params();
        let base = css(&y, &x, 1, m.n_cond);
        for i in 0..x.len() {
            for d in [1e-4, -1e-4] {
                let mut t = x.clone();
                t[i] += d;
                assert!(css(&y, &t, 1, m.n_cond) >= base - 1e-12, "coordinate {i} step {d}");
            }
        }
    }

    #[test]
    fn single_candidate_search() {
        let y = simulate(0.0, &[], &[], 1.0, 100, &mut rng(5));
        assert_eq!(auto_order(&y, 0, 0).unwrap(), (0, 0));
    }

    #[test]
    fn true_order_beats_overspecified_on_average() {
        let mut wins = 0.0;
        for seed in 0..20 {
            let y = simulate(0.0, &[0.6], &[], 1.0, 500, &mut rng(100 + seed));
            let true_fit = fit_arma_with(&y, 1, 0, 3, None).unwrap();
            let over = fit_arma_with(&y, 3, 2, 3, None).unwrap();
            wins += over.aic - true_fit.aic;
        }
        assert!(wins / 20.0 > 0.0);
    }

    #[test]
    fn refit_keeps_orders() {
        let y = simulate(0.0, &[0.5], &[0.2], 1.0, 300, &mut rng(6));
        let m = fit_arma(&y, 1, 1).unwrap();
        let r = refit(&m, &y[..250]).unwrap();
        assert_eq!((r.p, r.q), (1, 1));
    }

    #[test]
    fn pacf_transform_roundtrip() {
        for a in [vec![0.5], vec![1.2, -0.5], vec![0.3, 0.2, -0.1]] {
            assert!(is_stationary(&a));
            let back = pacf_to_ar(&ar_to_pacf(&a));
            for (x, y) in a.iter().zip(&back) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let u = [0.0, 3.0, -4.0, 5.0, 2.0, -6.0];
        let x = to_constrained(&u, 3);
        assert!(is_stationary(&x[1..4]) && is_invertible(&x[4..]));
    }
}
