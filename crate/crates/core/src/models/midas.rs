//! Univariate exponential-Almon MIDAS regressions, one per monthly
//! indicator, combined by an RMSE-discounted weighted mean.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{Quarter, QuarterRange};
use crate::data::{Frequency, Panel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{self, Options};
use crate::preprocess::FillStats;
use crate::vintage::VintageView;

/// `w_i ∝ exp(θ₁ i + θ₂ i²)`, i = 1..=L, normalized with max-subtraction.
pub fn almon_weights(theta1: f64, theta2: f64, lags: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=lags)
        .map(|i| {
            let i = i as f64;
            theta1 * i + theta2 * i * i
        })
        .collect();
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = raw.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidasComponent {
    pub indicator: String,
    pub intercept: f64,
    pub slope: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub lags: usize,
    pub rmse: f64,
}

impl MidasComponent {
    /// `x[i]` is the indicator i months before the reference month.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let w = almon_weights(self.theta1, self.theta2, self.lags);
        self.intercept + self.slope * w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// One multi-start outcome of the nested search.
#[derive(Debug, Clone, PartialEq)]
pub struct StartResult {
    pub theta: [f64; 2],
    pub ssr: f64,
    pub converged: bool,
}

pub const THETA_STARTS: [[f64; 2]; 6] = [
    [0.0, 0.0],
    [0.5, -0.05],
    [-0.5, 0.0],
    [0.1, -0.01],
    [-1.0, 0.05],
    [1.0, -0.1],
];

/// Closed-form (β₀, β₁) and SSR for fixed θ.
fn profile(y: &[f64], x: &DMatrix<f64>, theta: [f64; 2]) -> (f64, f64, f64) {
    let w = almon_weights(theta[0], theta[1], x.ncols());
    let z: Vec<f64> = (0..x.nrows())
        .map(|r| w.iter().enumerate().map(|(i, wi)| wi * x[(r, i)]).sum())
        .collect();
    let design = DMatrix::from_fn(y.len(), 2, |r, c| if c == 0 { 1.0 } else { z[r] });
    let (b, _) = linalg::lstsq(&design, &DVector::from_column_slice(y));
    let ssr: f64 = y
        .iter()
        .zip(&z)
        .map(|(v, zi)| (v - b[0] - b[1] * zi).powi(2))
        .sum();
    (b[0], b[1], ssr)
}

/// Nested least squares: derivative-free search over θ from every start,
/// closed-form (β₀, β₁) inside. Returns the best component and all starts.
pub fn midas_fit_with_starts(
    indicator: &str,
    y: &[f64],
    x: &DMatrix<f64>,
    starts: &[[f64; 2]],
) -> Result<(MidasComponent, Vec<StartResult>)> {
    let lags = x.ncols();
    if lags == 0 {
        return Err(Error::invalid("MIDAS needs at least one lag"));
    }
    if y.len() != x.nrows() || y.len() < 4 {
        return Err(Error::invalid(format!("MIDAS needs ≥ 4 aligned rows, got {}", y.len())));
    }
    let results: Vec<StartResult> = if lags == 1 {
        let (_, _, ssr) = profile(y, x, [0.0, 0.0]);
        vec![StartResult {
            theta: [0.0, 0.0],
            ssr,
            converged: true,
        }]
    } else {
        let opts = Options {
            max_evals: 4000,
            initial_step: 0.1,
            ..Options::default()
        };
        starts
            .iter()
            .map(|s| {
                let m = optim::minimize(|t| profile(y, x, [t[0], t[1]]).2, s, &opts);
                StartResult {
                    theta: [m.x[0], m.x[1]],
                    ssr: m.fx,
                    converged: m.converged,
                }
            })
            .collect()
    };
    let best = results
        .iter()
        .filter(|r| r.converged && r.ssr.is_finite())
        .min_by(|a, b| a.ssr.total_cmp(&b.ssr))
        .ok_or_else(|| Error::NonConvergence(format!("MIDAS search for {indicator} failed from every start")))?;
    let (b0, b1, ssr) = profile(y, x, best.theta);
    let comp = MidasComponent {
        indicator: indicator.to_string(),
        intercept: b0,
        slope: b1,
        theta1: best.theta[0],
        theta2: best.theta[1],
        lags,
        rmse: (ssr / y.len() as f64).sqrt(),
    };
    Ok((comp, results))
}

pub fn midas_fit_univariate(indicator: &str, y: &[f64], x: &DMatrix<f64>) -> Result<MidasComponent> {
    midas_fit_with_starts(indicator, y, x, &THETA_STARTS).map(|r| r.0)
}

/// `w_i ∝ rmse_worst − rmse_i`; if every RMSE ties, equal weights.
pub fn combination_weights(rmses: &[f64]) -> Vec<f64> {
    let worst = rmses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = rmses.iter().map(|r| worst - r).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / rmses.len() as f64; rmses.len()]
    }
}

pub fn combine(forecasts: &[f64], weights: &[f64]) -> f64 {
    forecasts.iter().zip(weights).map(|(f, w)| f * w).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidasModel {
    pub components: Vec<MidasComponent>,
    pub weights: Vec<f64>,
    pub fill: FillStats,
    pub lags: usize,
}

/// Lag matrix for one indicator: `x[(r, i)]` is the value `i` months before
/// the final month of quarter r, mean-filled where missing.
fn lag_rows(panel: &Panel, col: usize, fill: f64, quarters: &[Quarter], lags: usize) -> DMatrix<f64> {
    DMatrix::from_fn(quarters.len(), lags, |r, i| {
        let m = quarters[r].last_month().add(-(i as i32));
        panel.value(col, m).unwrap_or(fill)
    })
}

/// Fits one component per monthly indicator on the quarters of `window`
/// whose full lag window lies inside the panel.
pub fn midas_fit(panel: &Panel, window: QuarterRange, lags: usize) -> Result<MidasModel> {
    let fill = FillStats::fit(panel, window)?;
    let first = panel.start().add(lags as i32 - 1).quarter();
    let quarters: Vec<Quarter> = window
        .iter()
        .filter(|q| *q >= first && panel.target_value(*q).is_some())
        .collect();
    let y: Vec<f64> = quarters.iter().map(|q| panel.target_value(*q).unwrap()).collect();
    let monthly = panel.feature_indices(Frequency::Monthly);
    if monthly.len() < 2 {
        return Err(Error::invalid("MIDAS combination needs at least two monthly indicators"));
    }
    let components: Vec<MidasComponent> = monthly
        .par_iter()
        .map(|&k| {
            let x = lag_rows(panel, k, fill.means[k], &quarters, lags);
            midas_fit_univariate(panel.columns()[k].id(), &y, &x)
        })
        .collect::<Result<_>>()?;
    let weights = combination_weights(&components.iter().map(|c| c.rmse).collect::<Vec<_>>());
    Ok(MidasModel {
        components,
        weights,
        fill,
        lags,
    })
}

impl MidasModel {
    pub fn component_forecasts(&self, view: &VintageView) -> Result<Vec<f64>> {
        let panel = &view.panel;
        self.components
            .iter()
            .map(|c| {
                let k = panel
                    .columns()
                    .iter()
                    .position(|col| col.id() == c.indicator)
                    .ok_or_else(|| Error::SchemaMismatch(format!("indicator {} missing from view", c.indicator)))?;
                let fill = self
                    .fill
                    .mean_of(&c.indicator)
                    .ok_or_else(|| Error::SchemaMismatch(c.indicator.clone()))?;
                let x = lag_rows(panel, k, fill, &[view.target_quarter], self.lags);
                let row: Vec<f64> = x.row(0).iter().copied().collect();
                Ok(c.predict(&row))
            })
            .collect()
    }

    pub fn nowcast(&self, view: &VintageView) -> Result<f64> {
        Ok(combine(&self.component_forecasts(view)?, &self.weights))
    }
}
