//! Block dynamic factor model on a monthly grid, estimated by EM.
//!
//! Each block carries one factor following an AR(p); monthly variables load
//! on the current factors of their blocks and carry an AR(1) idiosyncratic
//! state; quarterly variables load on the `[1,2,3,2,1]/3` aggregate of five
//! monthly factor lags plus white noise. Data enter as z-scores.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calendar::{Month, QuarterRange};
use crate::data::{Frequency, Panel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::models::arma::is_stationary;
use crate::models::kalman::{kalman_filter, kalman_smoother, SmootherOutput, StateSpace};
use crate::preprocess::Scaler;
use crate::vintage::VintageView;

/// Monthly-to-quarterly aggregation weights on factor lags 0..=4.
pub const QUARTERLY_WEIGHTS: [f64; 5] = [1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0];

pub const GLOBAL_BLOCK: &str = "global";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfmSpec {
    pub block_names: Vec<String>,
    /// `membership[i][b]`: variable i loads on block b.
    pub membership: Vec<Vec<bool>>,
    /// Factor AR order.
    pub factor_lags: usize,
    pub max_iter: usize,
    /// Stop once the relative log-likelihood gain falls below this.
    pub tol: f64,
    /// Fixed measurement variance of monthly variables (z-score units).
    pub monthly_noise: f64,
}

impl DfmSpec {
    /// Global block plus one block per manifest tag, in first-seen order.
    pub fn from_panel(panel: &Panel, factor_lags: usize) -> Self {
        let mut names = vec![GLOBAL_BLOCK.to_string()];
        for col in panel.columns() {
            for b in &col.meta.blocks {
                if !names.contains(b) {
                    names.push(b.clone());
                }
            }
        }
        let membership = panel
            .columns()
            .iter()
            .map(|c| names.iter().map(|n| n == GLOBAL_BLOCK || c.meta.blocks.contains(n)).collect())
            .collect();
        DfmSpec {
            block_names: names,
            membership,
            factor_lags,
            max_iter: 50,
            tol: 1e-4,
            monthly_noise: 1e-4,
        }
    }

    pub fn validate(&self, n_vars: usize) -> Result<()> {
        if self.membership.len() != n_vars {
            return Err(Error::invalid(format!(
                "block membership has {} rows for {n_vars} variables",
                self.membership.len()
            )));
        }
        let nb = self.block_names.len();
        if self.block_names.first().map(String::as_str) != Some(GLOBAL_BLOCK) {
            return Err(Error::invalid("the first block must be the global block"));
        }
        for (i, row) in self.membership.iter().enumerate() {
            if row.len() != nb || !row[0] {
                return Err(Error::invalid(format!("variable {i} must belong to the global block")));
            }
        }
        if self.factor_lags == 0 || self.max_iter == 0 || !(self.tol > 0.0) || !(self.monthly_noise > 0.0) {
            return Err(Error::invalid("DFM needs factor_lags ≥ 1, max_iter ≥ 1, tol > 0, monthly_noise > 0"));
        }
        Ok(())
    }
}

/// Free parameters of the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Params {
    phi: Vec<Vec<f64>>,
    q_factor: Vec<f64>,
    /// `lambda[i][b]`, zero outside block membership.
    lambda: Vec<Vec<f64>>,
    /// Idiosyncratic AR(1) per monthly variable (`None` for quarterly).
    rho: Vec<Option<f64>>,
    sig2: Vec<Option<f64>>,
    /// Measurement variance per variable.
    r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layout {
    n_blocks: usize,
    lags: usize,
    /// State index of each monthly variable's idiosyncratic term.
    idio: Vec<Option<usize>>,
    n_states: usize,
}

impl Layout {
    fn new(n_blocks: usize, p: usize, freqs: &[Frequency]) -> Self {
        let lags = p.max(QUARTERLY_WEIGHTS.len());
        let mut next = n_blocks * lags;
        let idio = freqs
            .iter()
            .map(|f| {
                (*f == Frequency::Monthly).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Layout {
            n_blocks,
            lags,
            idio,
            n_states: next,
        }
    }

    fn factor(&self, b: usize, lag: usize) -> usize {
        b * self.lags + lag
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfmModel {
    pub spec: DfmSpec,
    pub ids: Vec<String>,
    pub frequencies: Vec<Frequency>,
    pub scaler: Scaler,
    pub state_space: StateSpace,
    /// Log-likelihood after each EM iteration.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    /// First month of the estimation sample; filtering always starts here.
    pub start: Month,
    params: Params,
    layout: Layout,
}

fn build_state_space(params: &Params, layout: &Layout, freqs: &[Frequency], p: usize, p0: Option<&DMatrix<f64>>) -> StateSpace {
    let n = layout.n_states;
    let m = freqs.len();
    let mut a = DMatrix::zeros(n, n);
    let mut q = DMatrix::zeros(n, n);
    for b in 0..layout.n_blocks {
        let f = layout.factor(b, 0);
        for l in 0..p {
            a[(f, layout.factor(b, l))] = params.phi[b][l];
        }
        for k in 1..layout.lags {
            a[(layout.factor(b, k), layout.factor(b, k - 1))] = 1.0;
        }
        q[(f, f)] = params.q_factor[b];
    }
    let mut c = DMatrix::zeros(m, n);
    for i in 0..m {
        for b in 0..layout.n_blocks {
            let lam = params.lambda[i][b];
            match freqs[i] {
                Frequency::Monthly => c[(i, layout.factor(b, 0))] = lam,
                Frequency::Quarterly => {
                    for (k, w) in QUARTERLY_WEIGHTS.iter().enumerate() {
                        c[(i, layout.factor(b, k))] = lam * w;
                    }
                }
            }
        }
        if let Some(e) = layout.idio[i] {
            c[(i, e)] = 1.0;
            a[(e, e)] = params.rho[i].unwrap();
            q[(e, e)] = params.sig2[i].unwrap();
        }
    }
    let p0 = match p0 {
        Some(p0) => p0.clone(),
        None => linalg::discrete_lyapunov(&a, &q),
    };
    StateSpace {
        a,
        c,
        q,
        r: DVector::from_column_slice(&params.r),
        x0: DVector::zeros(n),
        p0,
    }
}

/// z-scored observation rows for months `start..=end`.
fn observation_rows(panel: &Panel, scaler: &Scaler, start: Month, end: Month) -> Result<Vec<Vec<Option<f64>>>> {
    let z = scaler.transform(&panel.extend_to(end))?;
    Ok(Month::range_inclusive(start, end)
        .map(|mo| (0..z.columns().len()).map(|i| z.value(i, mo)).collect())
        .collect())
}

fn first_principal_component(x: &DMatrix<f64>) -> DVector<f64> {
    let svd = x.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let idx = svd.singular_values.imax();
    let mut f = u.column(idx).into_owned();
    let sd = (f.norm_squared() / f.len() as f64).sqrt();
    if sd > 0.0 {
        f /= sd;
    }
    f
}

fn regress(y: &[f64], x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let (b, _) = linalg::lstsq(x, &DVector::from_column_slice(y));
    let fitted = x * &b;
    let resid = y.iter().zip(fitted.iter()).map(|(a, f)| a - f).collect();
    (b.iter().copied().collect(), resid)
}

/// Principal-component starting values on the mean-filled z-scores.
fn initial_params(obs: &[Vec<Option<f64>>], spec: &DfmSpec, freqs: &[Frequency], layout: &Layout) -> Params {
    let t_len = obs.len();
    let m = freqs.len();
    let p = spec.factor_lags;
    let monthly: Vec<usize> = (0..m).filter(|&i| freqs[i] == Frequency::Monthly).collect();
    let filled = |i: usize| -> Vec<f64> { obs.iter().map(|r| r[i].unwrap_or(0.0)).collect() };

    let mut factors: Vec<Vec<f64>> = Vec::new();
    for b in 0..layout.n_blocks {
        let members: Vec<usize> = monthly.iter().copied().filter(|&i| spec.membership[i][b]).collect();
        let mut cols: Vec<Vec<f64>> = members.iter().map(|&i| filled(i)).collect();
        if !factors.is_empty() {
            let prev = DMatrix::from_fn(t_len, factors.len(), |t, k| factors[k][t]);
            cols = cols.iter().map(|c| regress(c, &prev).1).collect();
        }
        let f = if cols.is_empty() {
            vec![0.0; t_len]
        } else {
            let x = DMatrix::from_fn(t_len, cols.len(), |t, k| cols[k][t]);
            first_principal_component(&x).iter().copied().collect()
        };
        factors.push(f);
    }

    let mut phi = Vec::new();
    let mut q_factor = Vec::new();
    for f in &factors {
        let rows = t_len - p;
        let x = DMatrix::from_fn(rows, p, |r, l| f[r + p - 1 - l]);
        let (mut coef, resid) = regress(&f[p..], &x);
        while !is_stationary(&coef) {
            coef.iter_mut().for_each(|c| *c *= 0.9);
        }
        let v = linalg::variance(&resid);
        phi.push(coef);
        q_factor.push(if v.is_finite() && v > 1e-4 { v } else { 1.0 });
    }

    let mut lambda = vec![vec![0.0; layout.n_blocks]; m];
    let mut rho = vec![None; m];
    let mut sig2 = vec![None; m];
    let mut r = vec![spec.monthly_noise; m];
    for i in 0..m {
        let blocks: Vec<usize> = (0..layout.n_blocks).filter(|&b| spec.membership[i][b]).collect();
        let times: Vec<usize> = (0..t_len).filter(|&t| obs[t][i].is_some()).collect();
        let regressor = |t: usize, b: usize| -> f64 {
            match freqs[i] {
                Frequency::Monthly => factors[b][t],
                Frequency::Quarterly => QUARTERLY_WEIGHTS
                    .iter()
                    .enumerate()
                    .map(|(k, w)| if t >= k { w * factors[b][t - k] } else { 0.0 })
                    .sum(),
            }
        };
        let x = DMatrix::from_fn(times.len(), blocks.len(), |r, c| regressor(times[r], blocks[c]));
        let y: Vec<f64> = times.iter().map(|&t| obs[t][i].unwrap()).collect();
        let (coef, resid) = if times.len() > blocks.len() {
            regress(&y, &x)
        } else {
            (vec![0.0; blocks.len()], y.clone())
        };
        for (c, &b) in blocks.iter().enumerate() {
            lambda[i][b] = coef[c];
        }
        match freqs[i] {
            Frequency::Monthly => {
                let mut e = vec![0.0; t_len];
                for (k, &t) in times.iter().enumerate() {
                    e[t] = resid[k];
                }
                let num: f64 = (1..t_len).map(|t| e[t] * e[t - 1]).sum();
                let den: f64 = (1..t_len).map(|t| e[t - 1] * e[t - 1]).sum();
                let rh = if den > 0.0 { (num / den).clamp(-0.9, 0.9) } else { 0.0 };
                let v = (1..t_len).map(|t| (e[t] - rh * e[t - 1]).powi(2)).sum::<f64>() / (t_len - 1) as f64;
                rho[i] = Some(rh);
                sig2[i] = Some(v.max(1e-3));
            }
            Frequency::Quarterly => {
                r[i] = linalg::variance(&resid).max(1e-2);
            }
        }
    }
    Params {
        phi,
        q_factor,
        lambda,
        rho,
        sig2,
        r,
    }
}

/// Closed-form maximization of the expected complete-data log-likelihood.
fn m_step(
    sm: &SmootherOutput,
    obs: &[Vec<Option<f64>>],
    spec: &DfmSpec,
    freqs: &[Frequency],
    layout: &Layout,
    old: &Params,
) -> Params {
    let t_len = obs.len();
    let n = layout.n_states;
    let p = spec.factor_lags;
    let second = |t: usize| -> DMatrix<f64> { &sm.p[t] + &sm.x[t] * sm.x[t].transpose() };
    let mut s_prev = DMatrix::zeros(n, n);
    let mut s_cur = DMatrix::zeros(n, n);
    let mut s_lag = DMatrix::zeros(n, n);
    let mut s_all = Vec::with_capacity(t_len);
    for t in 0..t_len {
        s_all.push(second(t));
    }
    for t in 1..t_len {
        s_prev += &s_all[t - 1];
        s_cur += &s_all[t];
        s_lag += &sm.lag[t] + &sm.x[t] * sm.x[t - 1].transpose();
    }
    let nt = (t_len - 1) as f64;

    let mut phi = Vec::with_capacity(layout.n_blocks);
    let mut q_factor = Vec::with_capacity(layout.n_blocks);
    for b in 0..layout.n_blocks {
        let f = layout.factor(b, 0);
        let z: Vec<usize> = (0..p).map(|l| layout.factor(b, l)).collect();
        let szz = DMatrix::from_fn(p, p, |a, c| s_prev[(z[a], z[c])]);
        let sfz = DMatrix::from_fn(p, 1, |a, _| s_lag[(f, z[a])]);
        let coef = linalg::solve_spd(&szz, &sfz);
        let qv = (s_cur[(f, f)] - (coef.transpose() * &sfz)[(0, 0)]) / nt;
        phi.push(coef.iter().copied().collect());
        q_factor.push(qv.max(1e-8));
    }

    let mut rho = old.rho.clone();
    let mut sig2 = old.sig2.clone();
    for (i, e) in layout.idio.iter().enumerate() {
        if let Some(e) = *e {
            let rh = s_lag[(e, e)] / s_prev[(e, e)];
            let v = (s_cur[(e, e)] - rh * s_lag[(e, e)]) / nt;
            rho[i] = Some(rh);
            sig2[i] = Some(v.max(1e-8));
        }
    }

    let mut lambda = old.lambda.clone();
    let mut r = old.r.clone();
    for i in 0..freqs.len() {
        let blocks: Vec<usize> = (0..layout.n_blocks).filter(|&b| spec.membership[i][b]).collect();
        let k = blocks.len();
        // Loading map from the state: h[c] · x = regressor c.
        let h = DMatrix::from_fn(k, n, |c, s| match freqs[i] {
            Frequency::Monthly => {
                if s == layout.factor(blocks[c], 0) {
                    1.0
                } else {
                    0.0
                }
            }
            Frequency::Quarterly => (0..QUARTERLY_WEIGHTS.len())
                .find(|&l| layout.factor(blocks[c], l) == s)
                .map_or(0.0, |l| QUARTERLY_WEIGHTS[l]),
        });
        let mut a = DMatrix::zeros(k, k);
        let mut rhs = DMatrix::zeros(k, 1);
        let mut yy = 0.0;
        let mut n_obs = 0usize;
        for t in 0..t_len {
            let Some(y) = obs[t][i] else { continue };
            let hx = &h * &sm.x[t];
            a += &h * &s_all[t] * h.transpose();
            let mut contrib = hx * y;
            if let Some(e) = layout.idio[i] {
                contrib -= &h * s_all[t].column(e);
            }
            rhs += contrib;
            yy += y * y;
            n_obs += 1;
        }
        if n_obs == 0 {
            continue;
        }
        let lam = linalg::solve_spd(&a, &rhs);
        for (c, &b) in blocks.iter().enumerate() {
            lambda[i][b] = lam[(c, 0)];
        }
        if freqs[i] == Frequency::Quarterly {
            let v = (yy - 2.0 * (lam.transpose() * &rhs)[(0, 0)] + (lam.transpose() * &a * &lam)[(0, 0)]) / n_obs as f64;
            r[i] = v.max(1e-6);
        }
    }
    Params {
        phi,
        q_factor,
        lambda,
        rho,
        sig2,
        r,
    }
}

fn e_step(ss: &StateSpace, obs: &[Vec<Option<f64>>]) -> Result<(f64, SmootherOutput)> {
    let f = kalman_filter(ss, obs)?;
    let ll = f.loglik;
    Ok((ll, kalman_smoother(ss, &f)))
}

/// EM estimation on the months of `panel` inside `window`.
pub fn em_fit(panel: &Panel, spec: &DfmSpec, window: QuarterRange) -> Result<DfmModel> {
    let m = panel.columns().len();
    spec.validate(m)?;
    let freqs: Vec<Frequency> = panel.columns().iter().map(|c| c.meta.frequency).collect();
    for col in panel.columns() {
        let n_obs = panel
            .calendar()
            .iter()
            .zip(&col.values)
            .filter(|(mo, v)| window.contains_month(**mo) && v.is_some())
            .count();
        if col.meta.frequency == Frequency::Monthly && n_obs < 24 {
            return Err(Error::invalid(format!("{} has {n_obs} monthly observations; the DFM needs 24", col.id())));
        }
    }
    let scaler = Scaler::fit(panel, window)?;
    let first_monthly = panel
        .columns()
        .iter()
        .filter(|c| c.meta.frequency == Frequency::Monthly)
        .filter_map(|c| c.first_observed(panel.calendar()))
        .min()
        .ok_or_else(|| Error::invalid("the DFM needs at least one monthly variable"))?;
    let start = first_monthly.max(window.start.first_month()).quarter().first_month();
    let end = window.end.last_month().min(panel.end());
    let obs = observation_rows(panel, &scaler, start, end)?;
    if obs.len() < 24 {
        return Err(Error::invalid("DFM estimation sample shorter than 24 months"));
    }

    let layout = Layout::new(spec.block_names.len(), spec.factor_lags, &freqs);
    let mut params = initial_params(&obs, spec, &freqs, &layout);
    let mut ss = build_state_space(&params, &layout, &freqs, spec.factor_lags, None);
    let p0 = ss.p0.clone();
    let (mut ll, mut sm) = e_step(&ss, &obs)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..spec.max_iter {
        let next = m_step(&sm, &obs, spec, &freqs, &layout, &params);
        let next_ss = build_state_space(&next, &layout, &freqs, spec.factor_lags, Some(&p0));
        let (next_ll, next_sm) = e_step(&next_ss, &obs)?;
        trace.push(next_ll);
        let scale = ll.abs().max(1.0);
        if next_ll < ll - 1e-8 * scale {
            return Err(Error::EmMonotonicity { prev: ll, next: next_ll });
        }
        let gain = next_ll - ll;
        params = next;
        ss = next_ss;
        sm = next_sm;
        ll = next_ll;
        if gain < spec.tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("DFM EM stopped after {} iterations without converging", spec.max_iter);
    }
    Ok(DfmModel {
        spec: spec.clone(),
        ids: panel.ids(),
        frequencies: freqs,
        scaler,
        state_space: ss,
        loglik_trace: trace,
        converged,
        start,
        params,
        layout,
    })
}

impl DfmModel {
    fn target_index(&self, panel: &Panel) -> Result<usize> {
        if panel.ids() != self.ids {
            return Err(Error::SchemaMismatch(format!("DFM fitted on {:?}, got {:?}", self.ids, panel.ids())));
        }
        Ok(panel.target_index())
    }

    /// Smoothed state through `end` on a (masked) panel.
    pub fn smooth(&self, panel: &Panel, end: Month) -> Result<SmootherOutput> {
        let obs = observation_rows(panel, &self.scaler, self.start, end)?;
        let f = kalman_filter(&self.state_space, &obs)?;
        Ok(kalman_smoother(&self.state_space, &f))
    }

    /// Smoothed estimate of variable `col` in original units.
    pub fn fitted_value(&self, sm: &SmootherOutput, col: usize, month: Month) -> f64 {
        let t = month.diff(self.start) as usize;
        let z = (self.state_space.c.row(col) * &sm.x[t])[0];
        z * self.scaler.sds[col] + self.scaler.means[col]
    }

    /// Quarterly growth nowcast for the view's target quarter.
    pub fn nowcast(&self, view: &VintageView) -> Result<f64> {
        let k = self.target_index(&view.panel)?;
        let end = view.horizon();
        let sm = self.smooth(&view.panel, end)?;
        Ok(self.fitted_value(&sm, k, view.target_quarter.last_month()))
    }

    /// Smoothed global factor over the estimation sample.
    pub fn global_factor(&self, panel: &Panel, end: Month) -> Result<Vec<f64>> {
        let sm = self.smooth(panel, end)?;
        let f = self.layout.factor(0, 0);
        Ok(sm.x.iter().map(|x| x[f]).collect())
    }
}
