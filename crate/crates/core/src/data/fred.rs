//! FRED series-observations client with a local CSV cache.
//!
//! Cache layout, one pair of files per series code:
//! `<code>.csv` with header `date,value` (ISO-8601 first-of-period dates,
//! empty string for missing) and `<code>.json` with metadata.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::calendar::Month;
use crate::data::series::{Frequency, SeriesMeta, TimeSeries};
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "FRED_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.stlouisfed.org/fred";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheSidecar {
    pub source_code: String,
    pub frequency: Frequency,
    pub first_date: String,
    pub last_date: String,
    pub n_observations: usize,
}

#[derive(Debug, Deserialize)]
struct ObservationsResponse {
    observations: Vec<RawObservation>,
}

#[derive(Debug, Deserialize)]
struct RawObservation {
    date: String,
    value: String,
}

#[derive(Debug, Deserialize)]
struct ApiError {
    #[serde(default)]
    error_message: String,
}

/// Where a fetched series came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FetchSource {
    Downloaded,
    Cache,
}

pub struct FredClient {
    base_url: String,
    api_key: Option<String>,
    cache_dir: PathBuf,
    http: reqwest::blocking::Client,
    // Requests are serialized per provider.
    gate: Mutex<()>,
}

impl FredClient {
    pub fn new(cache_dir: impl Into<PathBuf>, api_key: Option<String>) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Http {
                code: String::new(),
                message: e.to_string(),
            })?;
        Ok(FredClient {
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key: api_key.filter(|k| !k.is_empty()),
            cache_dir: cache_dir.into(),
            http,
            gate: Mutex::new(()),
        })
    }

    /// Client keyed from the `FRED_API_KEY` environment variable; without a
    /// key it runs offline against the cache.
    pub fn from_env(cache_dir: impl Into<PathBuf>) -> Result<Self> {
        FredClient::new(cache_dir, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into();
        self
    }

    pub fn is_offline(&self) -> bool {
        self.api_key.is_none()
    }

    pub fn cache_dir(&self) -> &Path {
        &self.cache_dir
    }

    /// Downloads `source_code` (refreshing the cache) or, when offline or
    /// the request fails, reads the cached copy.
    pub fn fetch(&self, source_code: &str) -> Result<(TimeSeries, FetchSource)> {
        let cached = cache_paths(&self.cache_dir, source_code);
        let Some(key) = &self.api_key else {
            if cached.0.exists() {
                return Ok((read_cache(&self.cache_dir, source_code)?, FetchSource::Cache));
            }
            return Err(Error::Http {
                code: source_code.to_string(),
                message: format!("offline (no {API_KEY_ENV}) and no cache file"),
            });
        };

        match self.download(source_code, key) {
            Ok(series) => {
                write_cache(&self.cache_dir, &series)?;
                Ok((series, FetchSource::Downloaded))
            }
            Err(e @ Error::UnknownSeries(_)) => Err(e),
            Err(e) if cached.0.exists() => {
                warn!("{source_code}: {e}; falling back to cache");
                Ok((read_cache(&self.cache_dir, source_code)?, FetchSource::Cache))
            }
            Err(e) => Err(e),
        }
    }

    fn download(&self, source_code: &str, key: &str) -> Result<TimeSeries> {
        let _guard = self.gate.lock().unwrap_or_else(|p| p.into_inner());
        let url = format!(
            "{}/series/observations?series_id={}&api_key={}&file_type=json",
            self.base_url.trim_end_matches('/'),
            source_code,
            key
        );
        info!("downloading {source_code}");
        let http_err = |message: String| Error::Http {
            code: source_code.to_string(),
            message,
        };
        let resp = self.http.get(&url).send().map_err(|e| http_err(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| http_err(e.to_string()))?;
        if !status.is_success() {
            let msg = serde_json::from_str::<ApiError>(&body)
                .map(|e| e.error_message)
                .unwrap_or_default();
            if status.as_u16() == 400 && msg.to_ascii_lowercase().contains("does not exist") {
                return Err(Error::UnknownSeries(source_code.to_string()));
            }
            return Err(http_err(format!("status {status}: {msg}")));
        }
        let parsed: ObservationsResponse =
            serde_json::from_str(&body).map_err(|e| http_err(format!("bad payload: {e}")))?;
        let rows: Vec<(String, Option<f64>)> = parsed
            .observations
            .into_iter()
            .map(|o| {
                let v = o.value.trim();
                let v = if v.is_empty() || v == "." {
                    None
                } else {
                    Some(v.parse::<f64>().map_err(|_| http_err(format!("bad value {v:?}")))?)
                };
                Ok((o.date, v))
            })
            .collect::<Result<_>>()?;
        series_from_rows(source_code, &rows)
    }
}

/// One-shot helper: fetch through a client keyed with `api_key`.
pub fn fetch_series(source_code: &str, cache_dir: &Path, api_key: Option<&str>) -> Result<TimeSeries> {
    FredClient::new(cache_dir, api_key.map(str::to_string))?
        .fetch(source_code)
        .map(|(s, _)| s)
}

fn infer_frequency(months: &[Month]) -> Frequency {
    let quarterly = months.len() >= 2
        && months.iter().all(|m| m.month_in_quarter() == 0)
        && months.windows(2).all(|w| w[1].diff(w[0]) % 3 == 0);
    if quarterly {
        Frequency::Quarterly
    } else {
        Frequency::Monthly
    }
}

/// Builds a series from provider rows (first-of-period dates).
fn series_from_rows(source_code: &str, rows: &[(String, Option<f64>)]) -> Result<TimeSeries> {
    if rows.is_empty() {
        return Err(Error::UnknownSeries(source_code.to_string()));
    }
    let months: Vec<Month> = rows
        .iter()
        .map(|(d, _)| Month::parse_iso(d))
        .collect::<Result<_>>()?;
    let frequency = infer_frequency(&months);
    let mut observations = BTreeMap::new();
    for (m, (_, v)) in months.iter().zip(rows) {
        let key = match frequency {
            Frequency::Monthly => *m,
            Frequency::Quarterly => m.quarter().last_month(),
        };
        observations.insert(key, *v);
    }
    let start = *observations.keys().next().expect("non-empty");
    let meta = SeriesMeta {
        id: source_code.to_string(),
        source_code: source_code.to_string(),
        frequency,
        publication_lag_months: 0,
        start_date: start,
        is_target: false,
        blocks: Vec::new(),
    };
    TimeSeries::new(meta, observations)
}

fn cache_paths(dir: &Path, code: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{code}.csv")), dir.join(format!("{code}.json")))
}

fn period_start(m: Month, f: Frequency) -> Month {
    match f {
        Frequency::Monthly => m,
        Frequency::Quarterly => m.quarter().first_month(),
    }
}

pub fn write_cache(dir: &Path, series: &TimeSeries) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let code = &series.meta.source_code;
    let (csv_path, json_path) = cache_paths(dir, code);
    let freq = series.meta.frequency;
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["date", "value"])?;
    for (m, v) in &series.observations {
        let value = v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([period_start(*m, freq).to_iso_date(), value])?;
    }
    w.flush()?;
    let first = series.observations.keys().next();
    let last = series.observations.keys().next_back();
    let sidecar = CacheSidecar {
        source_code: code.clone(),
        frequency: freq,
        first_date: first.map(|m| period_start(*m, freq).to_iso_date()).unwrap_or_default(),
        last_date: last.map(|m| period_start(*m, freq).to_iso_date()).unwrap_or_default(),
        n_observations: series.observations.len(),
    };
    std::fs::write(json_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_cache(dir: &Path, code: &str) -> Result<TimeSeries> {
    let (csv_path, json_path) = cache_paths(dir, code);
    let malformed = |message: String| Error::MalformedCache {
        path: csv_path.display().to_string(),
        message,
    };
    let mut r = csv::Reader::from_path(&csv_path)?;
    let headers = r.headers().map_err(|e| malformed(e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "value" {
        return Err(malformed(format!("expected header date,value, got {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        let date = rec.get(0).unwrap_or_default().to_string();
        let raw = rec.get(1).unwrap_or_default().trim();
        let v = if raw.is_empty() {
            None
        } else {
            Some(raw.parse::<f64>().map_err(|_| malformed(format!("bad value {raw:?}")))?)
        };
        Month::parse_iso(&date).map_err(|e| malformed(e.to_string()))?;
        rows.push((date, v));
    }
    if rows.is_empty() {
        return Err(malformed("no observations".into()));
    }
    let mut series = series_from_rows(code, &rows)?;
    if json_path.exists() {
        let text = std::fs::read_to_string(&json_path)?;
        let sidecar: CacheSidecar = serde_json::from_str(&text).map_err(|e| Error::MalformedCache {
            path: json_path.display().to_string(),
            message: e.to_string(),
        })?;
        // A single-row quarterly series cannot be inferred from dates.
        if sidecar.frequency != series.meta.frequency {
            let rows_again: BTreeMap<Month, Option<f64>> = series
                .observations
                .iter()
                .map(|(m, v)| match sidecar.frequency {
                    Frequency::Quarterly => (m.quarter().last_month(), *v),
                    Frequency::Monthly => (*m, *v),
                })
                .collect();
            series.meta.frequency = sidecar.frequency;
            series = TimeSeries::new(series.meta, rows_again)?;
        }
    }
    Ok(series)
}

/// Attaches manifest metadata (id, lag, blocks, target flag) to a fetched
/// series.
pub fn apply_meta(mut series: TimeSeries, meta: &SeriesMeta) -> Result<TimeSeries> {
    if series.meta.frequency != meta.frequency {
        return Err(Error::invalid(format!(
            "{}: manifest says {:?} but data is {:?}",
            meta.id, meta.frequency, series.meta.frequency
        )));
    }
    series.meta = meta.clone();
    Ok(series)
}
