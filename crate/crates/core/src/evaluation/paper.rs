//! Published ratio and revision tables, embedded for protocol checks.

use std::collections::BTreeMap;

use super::{Metric, PeriodFigures};
use crate::error::{Error, Result};
use crate::model_api::MethodologyId;
use crate::vintage::VintageOffset;

const FIXTURE: &str = include_str!("../../fixtures/paper_tables.csv");

/// Stated order of the aggregate score, best first.
pub const PUBLISHED_RANKING: [MethodologyId; 12] = [
    MethodologyId::Lstm,
    MethodologyId::Bvar,
    MethodologyId::Midas,
    MethodologyId::Dfm,
    MethodologyId::Ridge,
    MethodologyId::Mlp,
    MethodologyId::MfVar,
    MethodologyId::RandomForest,
    MethodologyId::GradientBoost,
    MethodologyId::Ols,
    MethodologyId::Arma,
    MethodologyId::DecisionTree,
];

/// Key: (period 1..=3, metric, offset or `None` for the Average row).
type RatioKey = (u8, Metric, Option<VintageOffset>);

#[derive(Debug, Clone, PartialEq)]
pub struct PaperTables {
    pub ratios: BTreeMap<RatioKey, BTreeMap<MethodologyId, f64>>,
    /// Average revision per period, in percentage points.
    pub revisions: BTreeMap<u8, BTreeMap<MethodologyId, f64>>,
}

impl PaperTables {
    pub fn load() -> Result<Self> {
        Self::parse(FIXTURE)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let mut ratios: BTreeMap<RatioKey, BTreeMap<MethodologyId, f64>> = BTreeMap::new();
        let mut revisions: BTreeMap<u8, BTreeMap<MethodologyId, f64>> = BTreeMap::new();
        for row in rd.records() {
            let row = row?;
            let bad = || Error::Parse(format!("bad fixture row {row:?}"));
            let period: u8 = row[1].parse().map_err(|_| bad())?;
            let id = MethodologyId::from_display_name(&row[4]).ok_or_else(bad)?;
            let value: f64 = row[5].parse().map_err(|_| bad())?;
            let metric = match &row[2] {
                "mae_ratio" => Metric::Mae,
                "rmse_ratio" => Metric::Rmse,
                "revision" => {
                    revisions.entry(period).or_default().insert(id, value);
                    continue;
                }
                _ => return Err(bad()),
            };
            let offset = match &row[3] {
                "avg" => None,
                s => Some(VintageOffset::new(s.parse().map_err(|_| bad())?)?),
            };
            ratios.entry((period, metric, offset)).or_default().insert(id, value);
        }
        Ok(PaperTables { ratios, revisions })
    }

    pub fn ratio(&self, period: u8, metric: Metric, offset: Option<VintageOffset>) -> &BTreeMap<MethodologyId, f64> {
        &self.ratios[&(period, metric, offset)]
    }

    /// Period figures with the ratio Average rows standing in for raw
    /// offset-averaged metrics.
    pub fn figures(&self) -> Vec<PeriodFigures> {
        (1..=3)
            .map(|p| {
                let mae = self.ratio(p, Metric::Mae, None);
                let rmse = self.ratio(p, Metric::Rmse, None);
                PeriodFigures {
                    period: format!("period{p}"),
                    accuracy: mae.iter().map(|(id, v)| (*id, (v + rmse[id]) / 2.0)).collect(),
                    revision: self.revisions[&p].clone(),
                }
            })
            .collect()
    }
}
