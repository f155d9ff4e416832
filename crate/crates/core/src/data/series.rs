use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calendar::Month;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    Quarterly,
}

/// Static description of one series in a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub id: String,
    pub source_code: String,
    pub frequency: Frequency,
    /// In month `m` the latest available observation is dated `m - lag`.
    pub publication_lag_months: u32,
    pub start_date: Month,
    #[serde(default)]
    pub is_target: bool,
    /// Factor-model block tags. The global block is implicit.
    #[serde(default)]
    pub blocks: Vec<String>,
}

impl SeriesMeta {
    pub fn monthly(id: &str, lag: u32, start: Month) -> Self {
        SeriesMeta {
            id: id.to_string(),
            source_code: id.to_string(),
            frequency: Frequency::Monthly,
            publication_lag_months: lag,
            start_date: start,
            is_target: false,
            blocks: Vec::new(),
        }
    }

    pub fn quarterly(id: &str, lag: u32, start: Month) -> Self {
        SeriesMeta {
            frequency: Frequency::Quarterly,
            ..SeriesMeta::monthly(id, lag, start)
        }
    }

    pub fn target(mut self) -> Self {
        self.is_target = true;
        self
    }
}

/// Dated observations with explicit missingness.
///
/// Quarterly series are keyed by the final month of each quarter.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub meta: SeriesMeta,
    pub observations: BTreeMap<Month, Option<f64>>,
}

impl TimeSeries {
    pub fn new(meta: SeriesMeta, observations: BTreeMap<Month, Option<f64>>) -> Result<Self> {
        if meta.frequency == Frequency::Quarterly {
            if let Some(m) = observations.keys().find(|m| !m.is_quarter_end()) {
                return Err(Error::invalid(format!(
                    "quarterly series {} has an observation in non-quarter-end month {m}",
                    meta.id
                )));
            }
        }
        Ok(TimeSeries { meta, observations })
    }

    /// Builds a contiguous series (one entry per period) starting at `start`.
    pub fn from_values(meta: SeriesMeta, start: Month, values: &[Option<f64>]) -> Result<Self> {
        let step = match meta.frequency {
            Frequency::Monthly => 1,
            Frequency::Quarterly => 3,
        };
        let observations = values
            .iter()
            .enumerate()
            .map(|(i, v)| (start.add(step * i as i32), *v))
            .collect();
        TimeSeries::new(meta, observations)
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn first_observed(&self) -> Option<Month> {
        self.observations
            .iter()
            .find(|(_, v)| v.is_some())
            .map(|(m, _)| *m)
    }

    pub fn last_observed(&self) -> Option<Month> {
        self.observations
            .iter()
            .rev()
            .find(|(_, v)| v.is_some())
            .map(|(m, _)| *m)
    }

    pub fn get(&self, m: Month) -> Option<f64> {
        self.observations.get(&m).copied().flatten()
    }

    pub fn values(&self) -> Vec<Option<f64>> {
        self.observations.values().copied().collect()
    }

    pub fn observed_count(&self) -> usize {
        self.observations.values().filter(|v| v.is_some()).count()
    }
}
