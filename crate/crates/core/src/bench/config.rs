//! Run configuration: which methodologies, periods and vintages to
//! evaluate, and where inputs and outputs live.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calendar::Quarter;
use crate::data::synthetic::{synthetic_availability_cutoff, synthetic_split};
use crate::data::{Manifest, SplitSpec};
use crate::error::{Error, Result};
use crate::evaluation::Metric;
use crate::model_api::{MethodologyId, ModelSpec, RefitPolicy};
use crate::preprocess::ImputeStrategy;
use crate::vintage::VintageOffset;

/// One named test period with its split and indicator availability cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    pub name: String,
    #[serde(default)]
    pub label: String,
    pub train_end: Quarter,
    pub valid_start: Quarter,
    pub valid_end: Quarter,
    pub test_start: Quarter,
    pub test_end: Quarter,
    /// Indicators must have data at or before this quarter to be used.
    pub availability_cutoff: Quarter,
}

impl PeriodConfig {
    pub fn split(&self) -> Result<SplitSpec> {
        SplitSpec::new(self.train_end, self.valid_start, self.valid_end, self.test_start, self.test_end)
    }

    fn from_split(name: &str, label: &str, s: SplitSpec, cutoff: Quarter) -> Self {
        PeriodConfig {
            name: name.into(),
            label: label.into(),
            train_end: s.train_end,
            valid_start: s.valid_start,
            valid_end: s.valid_end,
            test_start: s.test_start,
            test_end: s.test_end,
            availability_cutoff: cutoff,
        }
    }

    /// The three US test periods: early-1980s recessions, the financial
    /// crisis, and the COVID crisis.
    pub fn us_defaults() -> Vec<PeriodConfig> {
        let q = |s: &str| Quarter::parse(s).expect("static quarter");
        let mk = |name, label, te, vs, ve, ts, tend, cut| PeriodConfig {
            name: String::from(name),
            label: String::from(label),
            train_end: q(te),
            valid_start: q(vs),
            valid_end: q(ve),
            test_start: q(ts),
            test_end: q(tend),
            availability_cutoff: q(cut),
        };
        vec![
            mk("period1", "early 1980s recession", "1971Q4", "1966Q1", "1971Q4", "1972Q1", "1983Q4", "1960Q4"),
            mk("period2", "financial crisis", "2004Q4", "1992Q1", "2004Q4", "2005Q1", "2010Q4", "1991Q4"),
            mk("period3", "COVID crisis", "2015Q4", "2006Q1", "2015Q4", "2016Q1", "2021Q3", "2005Q4"),
        ]
    }

    pub fn synthetic_default() -> Vec<PeriodConfig> {
        vec![PeriodConfig::from_split(
            "synthetic",
            "synthetic crisis",
            synthetic_split(),
            synthetic_availability_cutoff(),
        )]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    /// Tune every methodology on its default grid.
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    /// Explicit grids; a methodology listed here is tuned even when
    /// `enabled` is false.
    #[serde(default)]
    pub grids: BTreeMap<MethodologyId, Vec<BTreeMap<String, f64>>>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            enabled: false,
            metric: default_metric(),
            grids: BTreeMap::new(),
        }
    }
}

fn default_metric() -> Metric {
    Metric::Mae
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest; the bundled US manifest when absent.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_methodologies")]
    pub methodologies: Vec<MethodologyId>,
    /// Defaults to the three US periods, or to the synthetic period when
    /// `synthetic` is set.
    #[serde(default)]
    pub periods: Option<Vec<PeriodConfig>>,
    #[serde(default = "default_offsets")]
    pub offsets: Vec<VintageOffset>,
    #[serde(default = "default_imputation")]
    pub imputation: ImputeStrategy,
    #[serde(default)]
    pub tune: TuneConfig,
    /// Per-methodology hyperparameter overrides.
    #[serde(default)]
    pub hyperparams: BTreeMap<MethodologyId, BTreeMap<String, f64>>,
    /// Per-methodology refit policy overrides.
    #[serde(default)]
    pub refit: BTreeMap<MethodologyId, RefitPolicy>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    /// Use the generated offline dataset instead of the manifest.
    #[serde(default)]
    pub synthetic: bool,
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_methodologies() -> Vec<MethodologyId> {
    MethodologyId::ALL.to_vec()
}

fn default_offsets() -> Vec<VintageOffset> {
    VintageOffset::ALL.to_vec()
}

fn default_imputation() -> ImputeStrategy {
    ImputeStrategy::MeanFill
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = cfg.manifest.as_mut() {
            rebase(m);
        }
        rebase(&mut cfg.cache_dir);
        rebase(&mut cfg.out_dir);
        Ok(cfg)
    }

    pub fn periods(&self) -> Vec<PeriodConfig> {
        match &self.periods {
            Some(p) => p.clone(),
            None if self.synthetic => PeriodConfig::synthetic_default(),
            None => PeriodConfig::us_defaults(),
        }
    }

    pub fn manifest(&self) -> Result<Manifest> {
        match &self.manifest {
            Some(p) => Manifest::load(p),
            None => Ok(Manifest::builtin()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.methodologies.is_empty() {
            return cfg_err("no methodologies selected".into());
        }
        if self.offsets.is_empty() {
            return cfg_err("no vintage offsets selected".into());
        }
        let periods = self.periods();
        if periods.is_empty() {
            return cfg_err("no test periods configured".into());
        }
        let mut names = BTreeSet::new();
        for p in &periods {
            if !names.insert(p.name.as_str()) {
                return Err(Error::DuplicateId(p.name.clone()));
            }
            p.split().map_err(|e| Error::Config(format!("period {}: {e}", p.name)))?;
        }
        if let Some(m) = &self.manifest {
            if !self.synthetic && !m.exists() {
                return cfg_err(format!("manifest {} does not exist", m.display()));
            }
        }
        for id in &self.methodologies {
            self.base_spec(*id).validate()?;
            for cand in self.grid(*id).unwrap_or_default() {
                self.base_spec(*id).merged(&cand).validate()?;
            }
        }
        Ok(())
    }

    /// Spec before tuning: schema defaults, config overrides, global seed.
    pub fn base_spec(&self, id: MethodologyId) -> ModelSpec {
        let mut spec = ModelSpec::new(id).with_seed(self.seed).with_impute(self.imputation);
        if let Some(h) = self.hyperparams.get(&id) {
            spec = spec.merged(h);
        }
        if let Some(r) = self.refit.get(&id) {
            spec = spec.with_refit(*r);
        }
        spec
    }

    /// Tuning grid for `id`, or `None` when it is not tuned.
    pub fn grid(&self, id: MethodologyId) -> Option<Vec<BTreeMap<String, f64>>> {
        match self.tune.grids.get(&id) {
            Some(g) => Some(g.clone()),
            None if self.tune.enabled => Some(crate::model_api::default_grid(id)),
            None => None,
        }
    }

    /// Digest of every setting that affects nowcast values. A cube built
    /// under one fingerprint is never resumed under another.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            synthetic: bool,
            manifest: Option<Manifest>,
            periods: Vec<PeriodConfig>,
            imputation: ImputeStrategy,
            tune: &'a TuneConfig,
            hyperparams: &'a BTreeMap<MethodologyId, BTreeMap<String, f64>>,
            refit: &'a BTreeMap<MethodologyId, RefitPolicy>,
            seed: u64,
        }
        let key = Key {
            synthetic: self.synthetic,
            manifest: if self.synthetic { None } else { self.manifest().ok() },
            periods: self.periods(),
            imputation: self.imputation,
            tune: &self.tune,
            hyperparams: &self.hyperparams,
            refit: &self.refit,
            seed: self.seed,
        };
        let json = serde_json::to_vec(&key).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
