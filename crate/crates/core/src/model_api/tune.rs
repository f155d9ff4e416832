use std::collections::BTreeMap;

use rayon::prelude::*;

use super::backend::{fit, predict};
use super::spec::ModelSpec;
use crate::data::{Panel, SplitSpec};
use crate::error::{Error, Result};
use crate::evaluation::Metric;
use crate::vintage::{mask_vintage, VintageOffset};

/// Validation score of one candidate: the metric over validation quarters
/// at each offset, averaged over the five offsets.
fn validation_score(spec: &ModelSpec, visible: &Panel, split: &SplitSpec, metric: Metric) -> Result<f64> {
    let tuning = split.tuning_split();
    let model = fit(spec, visible, &tuning)?;
    let quarters = split.valid_quarters();
    let actuals = quarters
        .iter()
        .map(|q| {
            visible
                .target_value(*q)
                .ok_or_else(|| Error::MissingCells(format!("no validation actual for {q}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut total = 0.0;
    for o in VintageOffset::ALL {
        let preds = quarters
            .iter()
            .map(|q| predict(&model, &mask_vintage(visible, *q, o)))
            .collect::<Result<Vec<f64>>>()?;
        total += metric.apply(&preds, &actuals)?;
    }
    Ok(total / VintageOffset::ALL.len() as f64)
}

/// Picks the grid candidate with the lowest validation score; ties go to
/// the earlier candidate. Rows after the validation window are never read.
pub fn tune(
    spec: &ModelSpec,
    grid: &[BTreeMap<String, f64>],
    panel: &Panel,
    split: &SplitSpec,
    metric: Metric,
) -> Result<ModelSpec> {
    if grid.is_empty() {
        return Err(Error::invalid("tuning grid is empty"));
    }
    split.validate()?;
    let visible = panel.through_quarter(split.valid_end)?;
    let candidates: Vec<ModelSpec> = grid.iter().map(|g| spec.merged(g)).collect();
    for c in &candidates {
        c.validate()?;
    }
    if grid.len() == 1 {
        return Ok(candidates.into_iter().next().unwrap());
    }
    let scores: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|c| validation_score(c, &visible, split, metric))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    let mut causes = Vec::new();
    for (i, s) in scores.into_iter().enumerate() {
        match s {
            Ok(v) if v.is_finite() => {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((i, v));
                }
            }
            Ok(v) => causes.push(format!("candidate {i}: score {v}")),
            Err(e) => causes.push(format!("candidate {i}: {e}")),
        }
    }
    match best {
        Some((i, _)) => Ok(candidates[i].clone()),
        None => Err(Error::TuneFailed(causes.join("; "))),
    }
}
