//! Series ingestion, growth transforms, panel assembly and splits.

pub mod fred;
pub mod manifest;
pub mod panel;
pub mod series;
pub mod synthetic;
pub mod transform;

use log::warn;

pub use fred::{fetch_series, FetchSource, FredClient};
pub use manifest::Manifest;
pub use panel::{availability_filter, build_panel, split, Column, Panel, SplitSpec};
pub use series::{Frequency, SeriesMeta, TimeSeries};
pub use transform::to_growth;

use crate::error::{Error, Result};

/// Level series for every manifest entry.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub levels: Vec<TimeSeries>,
}

/// Per-series outcome of loading a dataset from the provider/cache.
#[derive(Debug, Clone)]
pub struct FetchReport {
    pub entries: Vec<FetchEntry>,
}

#[derive(Debug, Clone)]
pub struct FetchEntry {
    pub id: String,
    pub source_code: String,
    pub outcome: std::result::Result<(FetchSource, String, String), String>,
}

impl FetchReport {
    pub fn downloaded(&self) -> usize {
        self.count(FetchSource::Downloaded)
    }

    pub fn cached(&self) -> usize {
        self.count(FetchSource::Cache)
    }

    pub fn failed(&self) -> usize {
        self.entries.iter().filter(|e| e.outcome.is_err()).count()
    }

    fn count(&self, src: FetchSource) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(&e.outcome, Ok((s, _, _)) if *s == src))
            .count()
    }

    pub fn summary(&self) -> String {
        format!(
            "{} downloaded, {} cached, {} failed",
            self.downloaded(),
            self.cached(),
            self.failed()
        )
    }
}

impl Dataset {
    /// Fetches every manifest series. Failures are collected per series;
    /// the dataset is returned only if the target loaded.
    pub fn fetch(manifest: &Manifest, client: &FredClient) -> (Result<Dataset>, FetchReport) {
        let mut levels = Vec::new();
        let mut entries = Vec::new();
        let mut target_ok = false;
        for meta in &manifest.series {
            let outcome = client
                .fetch(&meta.source_code)
                .and_then(|(s, src)| fred::apply_meta(s, meta).map(|s| (s, src)));
            match outcome {
                Ok((s, src)) => {
                    let first = s.first_observed().map(|m| m.to_string()).unwrap_or_default();
                    let last = s.last_observed().map(|m| m.to_string()).unwrap_or_default();
                    target_ok |= meta.is_target;
                    entries.push(FetchEntry {
                        id: meta.id.clone(),
                        source_code: meta.source_code.clone(),
                        outcome: Ok((src, first, last)),
                    });
                    levels.push(s);
                }
                Err(e) => {
                    warn!("{} ({}): {e}", meta.id, meta.source_code);
                    entries.push(FetchEntry {
                        id: meta.id.clone(),
                        source_code: meta.source_code.clone(),
                        outcome: Err(e.to_string()),
                    });
                }
            }
        }
        let report = FetchReport { entries };
        if !target_ok {
            return (
                Err(Error::UnknownSeries(format!(
                    "target {} unavailable",
                    manifest.target().source_code
                ))),
                report,
            );
        }
        let loaded: Vec<_> = levels.iter().map(|s| s.meta.clone()).collect();
        let manifest = Manifest {
            name: manifest.name.clone(),
            series: loaded,
        };
        (Ok(Dataset { manifest, levels }), report)
    }

    /// Growth-rate panel on the union monthly calendar.
    pub fn growth_panel(&self) -> Result<Panel> {
        let growth = self.levels.iter().map(to_growth).collect::<Result<Vec<_>>>()?;
        build_panel(&growth)
    }
}
