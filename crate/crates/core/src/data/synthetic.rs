//! Offline dataset with a known one-factor data generating process.
//!
//! A monthly AR(1) factor drives ten monthly indicators (each with an AR(1)
//! idiosyncratic term) and a latent monthly GDP whose quarterly averages
//! give the target. One quarter receives a large negative factor shock.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::calendar::{Month, Quarter};
use crate::data::manifest::Manifest;
use crate::data::panel::SplitSpec;
use crate::data::series::{SeriesMeta, TimeSeries};
use crate::data::fred::write_cache;
use crate::data::Dataset;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub start: Month,
    pub end: Month,
    pub n_indicators: usize,
    pub factor_ar: f64,
    pub crisis_quarter: Quarter,
    pub crisis_shock: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            start: Month::from_ordinal(1985 * 12),
            end: Month::from_ordinal(2016 * 12 + 11),
            n_indicators: 10,
            factor_ar: 0.6,
            crisis_quarter: Quarter::from_ordinal(2014 * 4 + 1),
            crisis_shock: -3.0,
        }
    }
}

/// Generated dataset plus the ground truth used to produce it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub factor: Vec<f64>,
    pub loadings: Vec<f64>,
    pub months: Vec<Month>,
}

const BLOCKS: [&str; 3] = ["real", "labor", "soft"];

/// Default split for the synthetic benchmark: twelve test quarters that
/// contain the crisis quarter.
pub fn synthetic_split() -> SplitSpec {
    SplitSpec::new(
        Quarter::from_ordinal(2012 * 4 + 3),
        Quarter::from_ordinal(2010 * 4),
        Quarter::from_ordinal(2012 * 4 + 3),
        Quarter::from_ordinal(2013 * 4),
        Quarter::from_ordinal(2015 * 4 + 3),
    )
    .expect("static split is consistent")
}

pub fn synthetic_availability_cutoff() -> Quarter {
    Quarter::from_ordinal(1998 * 4 + 3)
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticData {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };

    let months: Vec<Month> = Month::range_inclusive(cfg.start, cfg.end).collect();
    let n = months.len();

    let mut factor = vec![0.0; n];
    let mut prev = 0.0;
    for (t, m) in months.iter().enumerate() {
        let mut shock = normal();
        if m.quarter() == cfg.crisis_quarter {
            shock += cfg.crisis_shock;
        }
        prev = cfg.factor_ar * prev + shock;
        factor[t] = prev;
    }

    let mut series = Vec::new();
    let mut metas = Vec::new();
    let mut loadings = Vec::new();

    // Latent monthly GDP level; the quarterly target is its quarter average.
    let mut level = 100.0;
    let mut monthly_gdp = Vec::with_capacity(n);
    for &f in &factor {
        let g = 0.0025 + 0.003 * f + 0.001 * normal();
        level *= 1.0 + g;
        monthly_gdp.push(level);
    }
    let first_q = cfg.start.quarter();
    let n_q = n / 3;
    let gdp_levels: Vec<Option<f64>> = (0..n_q)
        .map(|k| Some(monthly_gdp[3 * k..3 * k + 3].iter().sum::<f64>() / 3.0))
        .collect();
    let gdp_meta = SeriesMeta {
        blocks: BLOCKS.iter().map(|b| b.to_string()).collect(),
        ..SeriesMeta::quarterly("gdp", 1, first_q.last_month()).target()
    };
    metas.push(gdp_meta.clone());
    series.push(TimeSeries::from_values(gdp_meta, first_q.last_month(), &gdp_levels).expect("valid"));

    for i in 0..cfg.n_indicators {
        let loading = 0.6 + 0.4 * ((i * 7 % 10) as f64 / 10.0);
        let rho = 0.1 * (i % 5) as f64;
        let idio_sd = 0.6 + 0.05 * i as f64;
        let scale = 0.004 + 0.001 * (i % 3) as f64;
        let drift = 0.001 * (i % 4) as f64;
        let lag = (i % 3) as u32;
        // Staggered starts exercise mean-filling of early history.
        let start_offset = match i {
            7 => 5 * 12,
            8 => 10 * 12,
            _ => 0,
        };
        loadings.push(loading);

        let mut e = 0.0;
        let mut lvl = 50.0 + 5.0 * i as f64;
        let mut values = Vec::with_capacity(n);
        for (t, &f) in factor.iter().enumerate() {
            e = rho * e + idio_sd * normal();
            let g = drift + scale * (loading * f + e);
            lvl *= 1.0 + g;
            values.push((t >= start_offset).then_some(lvl));
        }
        let meta = SeriesMeta {
            blocks: vec![BLOCKS[i % 3].to_string()],
            ..SeriesMeta::monthly(&format!("x{i:02}"), lag, months[start_offset])
        };
        metas.push(meta.clone());
        series.push(TimeSeries::from_values(meta, cfg.start, &values).expect("valid"));
    }

    let manifest = Manifest {
        name: "synthetic".into(),
        series: metas,
    };
    SyntheticData {
        dataset: Dataset {
            manifest,
            levels: series,
        },
        factor,
        loadings,
        months,
    }
}

/// Writes every generated level series into a provider cache directory
/// and returns the manifest that reads them back, so the cached-data code
/// path can run without network access.
pub fn write_synthetic_cache(data: &SyntheticData, cache_dir: &Path) -> Result<Manifest> {
    for s in &data.dataset.levels {
        write_cache(cache_dir, s)?;
    }
    Ok(data.dataset.manifest.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = generate(&SyntheticConfig::default());
        let b = generate(&SyntheticConfig::default());
        assert_eq!(a.dataset.levels, b.dataset.levels);
    }

    #[test]
    fn panel_has_ten_indicators_and_target() {
        let d = generate(&SyntheticConfig::default());
        let p = d.dataset.growth_panel().unwrap();
        assert_eq!(p.columns().len(), 11);
        assert_eq!(p.target().id(), "gdp");
        let split = synthetic_split();
        assert_eq!(split.test_quarters().len(), 12);
        assert!(split.test_range().contains(SyntheticConfig::default().crisis_quarter));
    }

    #[test]
    fn crisis_quarter_growth_is_negative() {
        let cfg = SyntheticConfig::default();
        let p = generate(&cfg).dataset.growth_panel().unwrap();
        let g = p.target_value(cfg.crisis_quarter).unwrap();
        assert!(g < 0.0, "crisis growth {g}");
    }

    #[test]
    fn cache_roundtrip_reproduces_levels() {
        let d = generate(&SyntheticConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_synthetic_cache(&d, dir.path()).unwrap();
        let client = crate::data::FredClient::new(dir.path(), None).unwrap();
        let (loaded, report) = Dataset::fetch(&manifest, &client);
        assert_eq!(report.cached(), 11);
        assert_eq!(loaded.unwrap().growth_panel().unwrap(), d.dataset.growth_panel().unwrap());
    }
}
