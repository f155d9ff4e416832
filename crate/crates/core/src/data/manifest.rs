//! Dataset manifest: which series to load, their publication lags, start
//! dates and factor-model block tags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::series::SeriesMeta;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub name: String,
    pub series: Vec<SeriesMeta>,
}

impl Manifest {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Manifest::from_toml_str(&text)
    }

    /// The manifest shipped with the crate (US GDP with monthly and
    /// quarterly indicators).
    pub fn builtin() -> Self {
        Manifest::from_toml_str(include_str!("../../config/manifest.toml"))
            .expect("bundled manifest is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return Err(Error::Config("manifest lists no series".into()));
        }
        let targets = self.series.iter().filter(|s| s.is_target).count();
        if targets != 1 {
            return Err(Error::Config(format!(
                "manifest needs exactly one target series, found {targets}"
            )));
        }
        let mut ids: Vec<&str> = self.series.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(w[0].to_string()));
        }
        Ok(())
    }

    pub fn target(&self) -> &SeriesMeta {
        self.series.iter().find(|s| s.is_target).expect("validated")
    }

    pub fn get(&self, id: &str) -> Option<&SeriesMeta> {
        self.series.iter().find(|s| s.id == id)
    }
}
