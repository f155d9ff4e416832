//! Imputation, mixed-frequency restructuring, standardization and design
//! matrices for the frequency-naive models.
//!
//! Quarterly columns only have "period cells" in quarter-end months; the
//! other two months of each quarter are structurally absent and are never
//! filled.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calendar::{Month, Quarter, QuarterRange};
use crate::data::{Column, Frequency, Panel, SeriesMeta, TimeSeries};
use crate::error::{Error, Result};
use crate::models::arma;
use crate::vintage::VintageView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeStrategy {
    MeanFill,
    ArmaFill,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputePolicy {
    pub strategy: ImputeStrategy,
    /// Window used for fill statistics. Must lie inside the training span.
    pub fit_window: QuarterRange,
}

impl ImputePolicy {
    pub fn mean_fill(fit_window: QuarterRange) -> Self {
        ImputePolicy {
            strategy: ImputeStrategy::MeanFill,
            fit_window,
        }
    }
}

fn is_period_cell(meta: &SeriesMeta, m: Month) -> bool {
    meta.frequency == Frequency::Monthly || m.is_quarter_end()
}

/// Per-column fill values (fit-window means), in panel column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillStats {
    pub ids: Vec<String>,
    pub means: Vec<f64>,
}

impl FillStats {
    pub fn fit(panel: &Panel, window: QuarterRange) -> Result<Self> {
        let mut means = Vec::with_capacity(panel.columns().len());
        for col in panel.columns() {
            let (sum, n) = panel
                .calendar()
                .iter()
                .zip(&col.values)
                .filter(|(m, _)| window.contains_month(**m))
                .filter_map(|(_, v)| *v)
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 {
                return Err(Error::AllMissing(col.id().to_string()));
            }
            means.push(sum / n as f64);
        }
        Ok(FillStats {
            ids: panel.ids(),
            means,
        })
    }

    pub fn mean_of(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|i| i == id).map(|k| self.means[k])
    }

    /// Replaces every missing period cell with the column mean.
    pub fn apply(&self, panel: &Panel) -> Result<Panel> {
        check_ids(&self.ids, panel)?;
        let mut out = panel.clone();
        let cal = panel.calendar().to_vec();
        for (col, mean) in out.columns_mut().iter_mut().zip(&self.means) {
            for (m, v) in cal.iter().zip(col.values.iter_mut()) {
                if v.is_none() && is_period_cell(&col.meta, *m) {
                    *v = Some(*mean);
                }
            }
        }
        Ok(out)
    }
}

fn check_ids(ids: &[String], panel: &Panel) -> Result<()> {
    if ids != panel.ids().as_slice() {
        return Err(Error::SchemaMismatch(format!(
            "expected columns {ids:?}, got {:?}",
            panel.ids()
        )));
    }
    Ok(())
}

pub fn mean_fill(panel: &Panel, policy: &ImputePolicy) -> Result<Panel> {
    FillStats::fit(panel, policy.fit_window)?.apply(panel)
}

/// Period cells of one column as `(month, value)` pairs.
fn period_cells(panel: &Panel, col: &Column) -> Vec<(Month, Option<f64>)> {
    panel
        .calendar()
        .iter()
        .zip(&col.values)
        .filter(|(m, _)| is_period_cell(&col.meta, **m))
        .map(|(m, v)| (*m, *v))
        .collect()
}

const ARMA_FILL_MIN_OBS: usize = 20;
const ARMA_FILL_MAX_ORDER: usize = 2;

/// Ragged-edge cells (after each column's last observation) are replaced by
/// h-step forecasts of a per-column ARMA; other gaps are mean-filled.
pub fn arma_fill(panel: &Panel, policy: &ImputePolicy) -> Result<Panel> {
    let stats = FillStats::fit(panel, policy.fit_window)?;
    arma_fill_with(panel, &stats)
}

pub fn arma_fill_with(panel: &Panel, stats: &FillStats) -> Result<Panel> {
    check_ids(&stats.ids, panel)?;
    let mut out = stats.apply(panel)?;
    for (k, col) in panel.columns().iter().enumerate() {
        let cells = period_cells(panel, col);
        let Some(last_obs) = cells.iter().rposition(|(_, v)| v.is_some()) else {
            continue;
        };
        let ragged: Vec<Month> = cells[last_obs + 1..].iter().map(|(m, _)| *m).collect();
        if ragged.is_empty() {
            continue;
        }
        let first_obs = cells.iter().position(|(_, v)| v.is_some()).unwrap_or(0);
        let history: Vec<f64> = cells[first_obs..=last_obs]
            .iter()
            .map(|(_, v)| v.unwrap_or(stats.means[k]))
            .collect();
        let observed = cells.iter().filter(|(_, v)| v.is_some()).count();
        if observed < ARMA_FILL_MIN_OBS {
            warn!("{}: {observed} observations, too few for ARMA fill; mean-filled", col.id());
            continue;
        }
        match arma::auto_fit(&history, ARMA_FILL_MAX_ORDER, ARMA_FILL_MAX_ORDER) {
            Ok(model) => {
                let fc = arma::forecast(&model, &history, ragged.len());
                let row_of = |m: Month| out.row(m).expect("calendar month");
                let rows: Vec<usize> = ragged.iter().map(|m| row_of(*m)).collect();
                let c = &mut out.columns_mut()[k];
                for (r, v) in rows.into_iter().zip(fc) {
                    c.values[r] = Some(v);
                }
            }
            Err(e) => warn!("{}: ARMA fill failed ({e}); mean-filled", col.id()),
        }
    }
    Ok(out)
}

/// Splits a monthly series into three quarterly series holding the first,
/// second and third month of each quarter (keyed by quarter-end month).
pub fn stack_monthly(series: &TimeSeries) -> Result<[TimeSeries; 3]> {
    if series.meta.frequency != Frequency::Monthly {
        return Err(Error::invalid(format!("{} is not monthly", series.id())));
    }
    let (Some(first), Some(last)) = (
        series.observations.keys().next(),
        series.observations.keys().next_back(),
    ) else {
        return Err(Error::invalid("empty series"));
    };
    let quarters: Vec<Quarter> = Quarter::range_inclusive(first.quarter(), last.quarter()).collect();
    let build = |k: usize| {
        let obs: BTreeMap<Month, Option<f64>> = quarters
            .iter()
            .map(|q| (q.last_month(), series.get(q.months()[k])))
            .collect();
        let meta = SeriesMeta {
            id: format!("{}_m{}", series.id(), k + 1),
            frequency: Frequency::Quarterly,
            ..series.meta.clone()
        };
        TimeSeries::new(meta, obs)
    };
    Ok([build(0)?, build(1)?, build(2)?])
}

/// Interleaves stacked series back into a monthly series.
pub fn unstack(stacked: &[TimeSeries; 3], meta: SeriesMeta) -> Result<TimeSeries> {
    let mut obs = BTreeMap::new();
    for (k, s) in stacked.iter().enumerate() {
        for (m, v) in &s.observations {
            obs.insert(m.quarter().months()[k], *v);
        }
    }
    TimeSeries::new(meta, obs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    MeanGrowth,
    CompoundGrowth,
}

/// Quarterly growth from three monthly growth rates. Any missing month
/// makes the quarter missing.
pub fn aggregate_quarterly(series: &TimeSeries, mode: AggregationMode) -> Result<TimeSeries> {
    let [m1, m2, m3] = stack_monthly(series)?;
    let obs = m1
        .observations
        .iter()
        .map(|(m, a)| {
            let v = match (a, m2.get(*m), m3.get(*m)) {
                (Some(a), Some(b), Some(c)) => Some(match mode {
                    AggregationMode::MeanGrowth => (a + b + c) / 3.0,
                    AggregationMode::CompoundGrowth => (1.0 + a) * (1.0 + b) * (1.0 + c) - 1.0,
                }),
                _ => None,
            };
            (*m, v)
        })
        .collect();
    let meta = SeriesMeta {
        frequency: Frequency::Quarterly,
        ..series.meta.clone()
    };
    TimeSeries::new(meta, obs)
}

/// Column-wise z-score transform fitted on a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub ids: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Scaler {
    pub fn fit(panel: &Panel, window: QuarterRange) -> Result<Self> {
        let stats = FillStats::fit(panel, window)?;
        let mut sds = Vec::with_capacity(stats.means.len());
        for (col, mean) in panel.columns().iter().zip(&stats.means) {
            let vals: Vec<f64> = panel
                .calendar()
                .iter()
                .zip(&col.values)
                .filter(|(m, _)| window.contains_month(**m))
                .filter_map(|(_, v)| *v)
                .collect();
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            let sd = var.sqrt();
            if !(sd > 1e-12 * (1.0 + mean.abs())) {
                return Err(Error::ZeroVariance(col.id().to_string()));
            }
            sds.push(sd);
        }
        Ok(Scaler {
            ids: stats.ids,
            means: stats.means,
            sds,
        })
    }

    pub fn transform(&self, panel: &Panel) -> Result<Panel> {
        check_ids(&self.ids, panel)?;
        let mut out = panel.clone();
        for ((col, m), s) in out.columns_mut().iter_mut().zip(&self.means).zip(&self.sds) {
            for v in col.values.iter_mut().flatten() {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id)
    }

    pub fn inverse_value(&self, id: &str, z: f64) -> Option<f64> {
        self.index_of(id).map(|k| z * self.sds[k] + self.means[k])
    }
}

pub fn standardize(panel: &Panel, fit_window: QuarterRange) -> Result<(Panel, Scaler)> {
    let s = Scaler::fit(panel, fit_window)?;
    Ok((s.transform(panel)?, s))
}

/// Quarterly rows of stacked features, their lags, and target lags.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub quarters: Vec<Quarter>,
    pub feature_names: Vec<String>,
    pub x: DMatrix<f64>,
    /// Target per row; `None` where unobserved (always the prediction row).
    pub y: Vec<Option<f64>>,
}

impl DesignMatrix {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row_of(&self, q: Quarter) -> Option<usize> {
        self.quarters.iter().position(|&r| r == q)
    }

    /// Rows with an observed target, as `(X, y)`.
    pub fn training_rows(&self) -> (DMatrix<f64>, Vec<f64>) {
        let idx: Vec<usize> = (0..self.quarters.len()).filter(|&i| self.y[i].is_some()).collect();
        let x = DMatrix::from_fn(idx.len(), self.n_features(), |r, c| self.x[(idx[r], c)]);
        let y = idx.iter().map(|&i| self.y[i].unwrap()).collect();
        (x, y)
    }
}

/// Stateless recipe for [`DesignMatrix`] construction; holds the column
/// layout and fill statistics fixed at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBuilder {
    pub n_lags: usize,
    pub strategy: ImputeStrategy,
    pub fill: FillStats,
}

impl FeatureBuilder {
    pub fn new(panel: &Panel, policy: &ImputePolicy, n_lags: usize) -> Result<Self> {
        Ok(FeatureBuilder {
            n_lags,
            strategy: policy.strategy,
            fill: FillStats::fit(panel, policy.fit_window)?,
        })
    }

    pub fn impute(&self, panel: &Panel) -> Result<Panel> {
        match self.strategy {
            ImputeStrategy::MeanFill => self.fill.apply(panel),
            ImputeStrategy::ArmaFill => arma_fill_with(panel, &self.fill),
        }
    }

    pub fn feature_names(&self, panel: &Panel) -> Vec<String> {
        let base = base_names(panel);
        let mut names = base.clone();
        for l in 1..=self.n_lags {
            names.extend(base.iter().map(|n| format!("{n}_lag{l}")));
        }
        let target = panel.target().id().to_string();
        names.extend((1..=self.n_lags).map(|l| format!("{target}_lag{l}")));
        names
    }

    /// Rows for quarters `first..=last` (clamped to the panel).
    pub fn build(&self, panel: &Panel, first: Quarter, last: Quarter) -> Result<DesignMatrix> {
        let filled = self.impute(panel)?;
        let first = first.max(panel.first_quarter());
        let quarters: Vec<Quarter> = Quarter::range_inclusive(first, last).collect();
        let base = base_features(&filled, &self.fill);
        let names = self.feature_names(panel);
        let t_idx = panel.target_index();
        let target_mean = self.fill.means[t_idx];
        let n_base = base.names_len;

        let mut x = DMatrix::zeros(quarters.len(), names.len());
        let mut y = Vec::with_capacity(quarters.len());
        for (r, &q) in quarters.iter().enumerate() {
            for l in 0..=self.n_lags {
                let row = base.row(q.add(-(l as i32)));
                for (c, v) in row.iter().enumerate() {
                    x[(r, l * n_base + c)] = *v;
                }
            }
            for l in 1..=self.n_lags {
                let v = filled
                    .value(t_idx, q.add(-(l as i32)).last_month())
                    .unwrap_or(target_mean);
                x[(r, (self.n_lags + 1) * n_base + l - 1)] = v;
            }
            y.push(panel.target_value(q));
        }
        Ok(DesignMatrix {
            quarters,
            feature_names: names,
            x,
            y,
        })
    }
}

fn base_names(panel: &Panel) -> Vec<String> {
    let mut names = Vec::new();
    for col in panel.columns().iter().filter(|c| !c.meta.is_target) {
        match col.meta.frequency {
            Frequency::Monthly => names.extend((1..=3).map(|k| format!("{}_m{k}", col.id()))),
            Frequency::Quarterly => names.push(col.id().to_string()),
        }
    }
    names
}

struct BaseFeatures<'a> {
    panel: &'a Panel,
    means: Vec<(usize, Frequency, f64)>,
    names_len: usize,
}

impl BaseFeatures<'_> {
    /// Base feature values for quarter `q`; quarters outside the calendar
    /// take the fill means.
    fn row(&self, q: Quarter) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.names_len);
        for &(k, freq, mean) in &self.means {
            match freq {
                Frequency::Monthly => {
                    for m in q.months() {
                        out.push(self.panel.value(k, m).unwrap_or(mean));
                    }
                }
                Frequency::Quarterly => out.push(self.panel.value(k, q.last_month()).unwrap_or(mean)),
            }
        }
        out
    }
}

fn base_features<'a>(filled: &'a Panel, fill: &FillStats) -> BaseFeatures<'a> {
    let means: Vec<(usize, Frequency, f64)> = filled
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.meta.is_target)
        .map(|(k, c)| (k, c.meta.frequency, fill.means[k]))
        .collect();
    let names_len = means
        .iter()
        .map(|(_, f, _)| if *f == Frequency::Monthly { 3 } else { 1 })
        .sum();
    BaseFeatures {
        panel: filled,
        means,
        names_len,
    }
}

/// mask → impute → stack → lags; one row per quarter from the panel start
/// through the view's target quarter (the prediction row is last).
pub fn build_design_matrix(view: &VintageView, policy: &ImputePolicy, n_lags: usize) -> Result<DesignMatrix> {
    let fb = FeatureBuilder::new(&view.panel, policy, n_lags)?;
    fb.build(&view.panel, view.panel.first_quarter(), view.target_quarter)
}
