use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodologyId {
    Arma,
    Bvar,
    DecisionTree,
    Dfm,
    GradientBoost,
    Lstm,
    MfVar,
    Midas,
    Mlp,
    Ols,
    RandomForest,
    Ridge,
}

impl MethodologyId {
    /// Table column order (alphabetical by display name, ARMA first).
    pub const ALL: [MethodologyId; 12] = [
        MethodologyId::Arma,
        MethodologyId::Bvar,
        MethodologyId::DecisionTree,
        MethodologyId::Dfm,
        MethodologyId::GradientBoost,
        MethodologyId::Lstm,
        MethodologyId::MfVar,
        MethodologyId::Midas,
        MethodologyId::Mlp,
        MethodologyId::Ols,
        MethodologyId::RandomForest,
        MethodologyId::Ridge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodologyId::Arma => "arma",
            MethodologyId::Bvar => "bvar",
            MethodologyId::DecisionTree => "decision_tree",
            MethodologyId::Dfm => "dfm",
            MethodologyId::GradientBoost => "gradient_boost",
            MethodologyId::Lstm => "lstm",
            MethodologyId::MfVar => "mf_var",
            MethodologyId::Midas => "midas",
            MethodologyId::Mlp => "mlp",
            MethodologyId::Ols => "ols",
            MethodologyId::RandomForest => "random_forest",
            MethodologyId::Ridge => "ridge",
        }
    }

    /// Name used in table headers.
    pub fn display_name(self) -> &'static str {
        match self {
            MethodologyId::Arma => "ARMA",
            MethodologyId::Bvar => "Bayesian VAR",
            MethodologyId::DecisionTree => "Decision Tree",
            MethodologyId::Dfm => "DFM",
            MethodologyId::GradientBoost => "Gradient Boost",
            MethodologyId::Lstm => "LSTM",
            MethodologyId::MfVar => "MF-VAR",
            MethodologyId::Midas => "MIDAS",
            MethodologyId::Mlp => "MLP",
            MethodologyId::Ols => "OLS",
            MethodologyId::RandomForest => "Random Forest",
            MethodologyId::Ridge => "Ridge",
        }
    }

    pub fn from_display_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.display_name() == s.trim())
    }
}

impl fmt::Display for MethodologyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodologyId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown methodology {s:?}")))
    }
}
