//! Accuracy ratios against the ARMA benchmark, nowcast revisions and the
//! aggregate min-max score.

mod cube;
pub mod paper;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_api::MethodologyId;
use crate::vintage::VintageOffset;

pub use cube::{parse_records, record_fields, CellKey, PredictionCube, CUBE_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mae,
    Rmse,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Mae, Metric::Rmse];

    pub fn apply(self, preds: &[f64], actuals: &[f64]) -> Result<f64> {
        match self {
            Metric::Mae => mae(preds, actuals),
            Metric::Rmse => rmse(preds, actuals),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Mae => "MAE",
            Metric::Rmse => "RMSE",
        }
    }
}

fn errors(preds: &[f64], actuals: &[f64]) -> Result<Vec<f64>> {
    if preds.len() != actuals.len() || preds.is_empty() {
        return Err(Error::invalid(format!("{} predictions for {} actuals", preds.len(), actuals.len())));
    }
    Ok(preds.iter().zip(actuals).map(|(p, a)| p - a).collect())
}

pub fn mae(preds: &[f64], actuals: &[f64]) -> Result<f64> {
    let e = errors(preds, actuals)?;
    Ok(e.iter().map(|v| v.abs()).sum::<f64>() / e.len() as f64)
}

pub fn rmse(preds: &[f64], actuals: &[f64]) -> Result<f64> {
    let e = errors(preds, actuals)?;
    Ok((e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt())
}

/// Methodology × offset values for one period, plus the mean over offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetTable {
    pub period: String,
    pub metric: Metric,
    pub methodologies: Vec<MethodologyId>,
    pub cells: Vec<[f64; 5]>,
    pub average: Vec<f64>,
}

impl OffsetTable {
    fn new(period: &str, metric: Metric, rows: Vec<(MethodologyId, [f64; 5])>) -> Self {
        let average = rows.iter().map(|(_, c)| c.iter().sum::<f64>() / 5.0).collect();
        let (methodologies, cells) = rows.into_iter().unzip();
        OffsetTable {
            period: period.to_string(),
            metric,
            methodologies,
            cells,
            average,
        }
    }

    pub fn row(&self, id: MethodologyId) -> Option<&[f64; 5]> {
        self.methodologies.iter().position(|m| *m == id).map(|i| &self.cells[i])
    }

    pub fn average_of(&self, id: MethodologyId) -> Option<f64> {
        self.methodologies.iter().position(|m| *m == id).map(|i| self.average[i])
    }

    pub fn averages(&self) -> BTreeMap<MethodologyId, f64> {
        self.methodologies.iter().copied().zip(self.average.iter().copied()).collect()
    }
}

/// Raw metric of every methodology at every offset over the period's quarters.
pub fn metric_table(cube: &PredictionCube, period: &str, metric: Metric) -> Result<OffsetTable> {
    let quarters = cube.quarters(period);
    if quarters.is_empty() {
        return Err(Error::MissingCells(format!("no records for {period}")));
    }
    let actuals = quarters
        .iter()
        .map(|q| {
            cube.actual(*q)
                .ok_or_else(|| Error::MissingCells(format!("no actual for {q}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut rows = Vec::new();
    for id in cube.methodologies(period) {
        let mut cells = [0.0; 5];
        for o in VintageOffset::ALL {
            let preds = quarters
                .iter()
                .map(|q| {
                    cube.get(id, period, *q, o)
                        .ok_or_else(|| Error::MissingCells(format!("{id} {period} {q} offset {o}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            cells[o.index()] = metric.apply(&preds, &actuals)?;
        }
        rows.push((id, cells));
    }
    Ok(OffsetTable::new(period, metric, rows))
}

/// Metric of each methodology divided by ARMA's at the same offset.
pub fn ratio_table(cube: &PredictionCube, period: &str, metric: Metric) -> Result<OffsetTable> {
    let raw = metric_table(cube, period, metric)?;
    let arma = *raw
        .row(MethodologyId::Arma)
        .ok_or_else(|| Error::MissingCells(format!("ARMA benchmark missing for {period}")))?;
    let rows = raw
        .methodologies
        .iter()
        .zip(&raw.cells)
        .map(|(id, c)| {
            let mut r = [0.0; 5];
            for k in 0..5 {
                r[k] = if *id == MethodologyId::Arma { 1.0 } else { c[k] / arma[k] };
            }
            (*id, r)
        })
        .collect();
    Ok(OffsetTable::new(period, metric, rows))
}

/// Mean absolute change between adjacent offsets, over quarters and the
/// four offset pairs, in the cube's units.
pub fn avg_revision(cube: &PredictionCube, period: &str) -> Result<BTreeMap<MethodologyId, f64>> {
    let quarters = cube.quarters(period);
    let mut out = BTreeMap::new();
    for id in cube.methodologies(period) {
        let mut total = 0.0;
        for q in &quarters {
            let preds = VintageOffset::ALL
                .iter()
                .map(|o| {
                    cube.get(id, period, *q, *o)
                        .ok_or_else(|| Error::MissingCells(format!("{id} {period} {q} offset {o}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            total += preds.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
        }
        out.insert(id, total / (4 * quarters.len()) as f64);
    }
    if out.is_empty() {
        return Err(Error::MissingCells(format!("no records for {period}")));
    }
    Ok(out)
}

/// `(x − min) / (max − min)`; all-equal inputs map to zero.
pub fn minmax_scale<K: Ord + Clone>(values: &BTreeMap<K, f64>) -> BTreeMap<K, f64> {
    let lo = values.values().copied().fold(f64::INFINITY, f64::min);
    let hi = values.values().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|(k, v)| (k.clone(), if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }))
        .collect()
}

/// Per-period inputs to the aggregate score.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodFigures {
    pub period: String,
    /// Mean of the offset-averaged MAE and RMSE figures.
    pub accuracy: BTreeMap<MethodologyId, f64>,
    pub revision: BTreeMap<MethodologyId, f64>,
}

impl PeriodFigures {
    pub fn from_tables(period: &str, mae: &OffsetTable, rmse: &OffsetTable, revision: BTreeMap<MethodologyId, f64>) -> Self {
        let (m, r) = (mae.averages(), rmse.averages());
        let accuracy = m.iter().map(|(id, v)| (*id, (v + r[id]) / 2.0)).collect();
        PeriodFigures {
            period: period.to_string(),
            accuracy,
            revision,
        }
    }
}

/// Mean of each period's scaled accuracy and the period-averaged scaled
/// revision. Every period must cover the same methodologies.
pub fn aggregate_from_figures(periods: &[PeriodFigures]) -> Result<BTreeMap<MethodologyId, f64>> {
    let first = periods.first().ok_or_else(|| Error::MissingCells("no periods to aggregate".into()))?;
    let ids: BTreeSet<MethodologyId> = first.accuracy.keys().copied().collect();
    if ids.len() < 2 {
        return Err(Error::invalid("aggregate score needs at least two methodologies"));
    }
    for p in periods {
        let a: BTreeSet<_> = p.accuracy.keys().copied().collect();
        let r: BTreeSet<_> = p.revision.keys().copied().collect();
        if a != ids || r != ids {
            return Err(Error::MissingCells(format!("{} covers different methodologies", p.period)));
        }
    }
    let n = periods.len() as f64;
    let mut score: BTreeMap<MethodologyId, f64> = ids.iter().map(|id| (*id, 0.0)).collect();
    let mut revision: BTreeMap<MethodologyId, f64> = score.clone();
    for p in periods {
        for (id, v) in minmax_scale(&p.accuracy) {
            *score.get_mut(&id).unwrap() += v;
        }
        for (id, v) in minmax_scale(&p.revision) {
            *revision.get_mut(&id).unwrap() += v / n;
        }
    }
    Ok(score
        .into_iter()
        .map(|(id, s)| (id, (s + revision[&id]) / (n + 1.0)))
        .collect())
}

/// Figures for one period of the cube.
pub fn period_figures(cube: &PredictionCube, period: &str) -> Result<PeriodFigures> {
    let mae = metric_table(cube, period, Metric::Mae)?;
    let rmse = metric_table(cube, period, Metric::Rmse)?;
    Ok(PeriodFigures::from_tables(period, &mae, &rmse, avg_revision(cube, period)?))
}

pub fn aggregate_score(cube: &PredictionCube, periods: &[String]) -> Result<BTreeMap<MethodologyId, f64>> {
    let figures = periods
        .iter()
        .map(|p| period_figures(cube, p))
        .collect::<Result<Vec<_>>>()?;
    aggregate_from_figures(&figures)
}

/// Methodologies ordered by ascending score, ties by table order.
pub fn ranking(scores: &BTreeMap<MethodologyId, f64>) -> Vec<MethodologyId> {
    let mut ids: Vec<MethodologyId> = scores.keys().copied().collect();
    ids.sort_by(|a, b| scores[a].total_cmp(&scores[b]));
    ids
}
