use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MethodologyId;
use crate::error::{Error, Result};
use crate::preprocess::ImputeStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitPolicy {
    FixedAfterTrain,
    RefitEachVintage,
}

impl RefitPolicy {
    /// The autoregressive trio re-estimates at every vintage.
    pub fn default_for(id: MethodologyId) -> Self {
        match id {
            MethodologyId::Arma | MethodologyId::Bvar | MethodologyId::MfVar => RefitPolicy::RefitEachVintage,
            _ => RefitPolicy::FixedAfterTrain,
        }
    }
}

/// One tunable hyperparameter: default and inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParam {
    pub name: &'static str,
    pub default: f64,
    pub min: f64,
    pub max: f64,
    pub integer: bool,
}

const fn int(name: &'static str, default: f64, min: f64, max: f64) -> HyperParam {
    HyperParam {
        name,
        default,
        min,
        max,
        integer: true,
    }
}

const fn real(name: &'static str, default: f64, min: f64, max: f64) -> HyperParam {
    HyperParam {
        name,
        default,
        min,
        max,
        integer: false,
    }
}

const N_LAGS: HyperParam = int("n_lags", 1.0, 0.0, 8.0);

const ARMA: &[HyperParam] = &[int("p_max", 5.0, 0.0, 8.0), int("q_max", 5.0, 0.0, 8.0)];

const BVAR: &[HyperParam] = &[
            int("p", 4.0, 1.0, 8.0),
            real("lambda1", 0.2, 1e-12, 1e12),
            real("lambda2", 0.5, 1e-12, 1.0),
            real("lambda3", 1.0, 0.0, 10.0),
            real("delta", 0.0, -1.0, 1.0),
        ];

const MF_VAR: &[HyperParam] = &[int("p", 1.0, 1.0, 8.0)];

const DFM: &[HyperParam] = &[
            int("factor_lags", 1.0, 1.0, 4.0),
            int("max_iter", 50.0, 1.0, 10_000.0),
            real("tol", 1e-4, 1e-12, 1.0),
        ];

const MIDAS: &[HyperParam] = &[int("lags", 12.0, 1.0, 36.0)];

const OLS: &[HyperParam] = &[N_LAGS];

const RIDGE: &[HyperParam] = &[N_LAGS, real("alpha", 1.0, 0.0, 1e12)];

const DECISION_TREE: &[HyperParam] = &[N_LAGS, int("max_depth", 4.0, 0.0, 64.0), int("min_samples_leaf", 3.0, 1.0, 1000.0)];

const RANDOM_FOREST: &[HyperParam] = &[
            N_LAGS,
            int("n_trees", 500.0, 1.0, 100_000.0),
            real("feature_fraction", 1.0 / 3.0, 1e-6, 1.0),
            int("max_depth", 0.0, 0.0, 64.0),
            int("min_samples_leaf", 1.0, 1.0, 1000.0),
        ];

const GRADIENT_BOOST: &[HyperParam] = &[
            N_LAGS,
            int("n_trees", 200.0, 1.0, 100_000.0),
            real("learning_rate", 0.05, 0.0, 1.0),
            int("max_depth", 3.0, 1.0, 64.0),
            int("min_samples_leaf", 1.0, 1.0, 1000.0),
        ];

const MLP: &[HyperParam] = &[
            N_LAGS,
            int("hidden1", 16.0, 1.0, 4096.0),
            int("hidden2", 8.0, 0.0, 4096.0),
            int("epochs", 200.0, 1.0, 100_000.0),
            real("learning_rate", 0.005, 0.0, 10.0),
            real("momentum", 0.9, 0.0, 0.999),
            int("batch_size", 16.0, 1.0, 100_000.0),
            int("n_models", 5.0, 1.0, 1000.0),
        ];

const LSTM: &[HyperParam] = &[
            int("hidden", 32.0, 1.0, 1024.0),
            int("n_timesteps", 12.0, 1.0, 120.0),
            int("n_models", 10.0, 1.0, 1000.0),
            int("epochs", 100.0, 1.0, 100_000.0),
            real("learning_rate", 0.005, 0.0, 10.0),
            real("momentum", 0.9, 0.0, 0.999),
            int("batch_size", 16.0, 1.0, 100_000.0),
        ];

/// Hyperparameter schema per backend. A `max_depth` of 0 means unlimited.
pub fn schema(id: MethodologyId) -> &'static [HyperParam] {
    use MethodologyId::*;
    match id {
        Arma => ARMA,
        Bvar => BVAR,
        MfVar => MF_VAR,
        Dfm => DFM,
        Midas => MIDAS,
        Ols => OLS,
        Ridge => RIDGE,
        DecisionTree => DECISION_TREE,
        RandomForest => RANDOM_FOREST,
        GradientBoost => GRADIENT_BOOST,
        Mlp => MLP,
        Lstm => LSTM,
    }
}

/// Small default tuning grids. An empty map keeps the defaults.
pub fn default_grid(id: MethodologyId) -> Vec<BTreeMap<String, f64>> {
    use MethodologyId::*;
    let one = |name: &str, values: &[f64]| -> Vec<BTreeMap<String, f64>> {
        values.iter().map(|v| BTreeMap::from([(name.to_string(), *v)])).collect()
    };
    match id {
        Ridge => one("alpha", &[0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]),
        Ols => one("n_lags", &[0.0, 1.0, 2.0]),
        DecisionTree => one("max_depth", &[2.0, 3.0, 4.0, 6.0]),
        GradientBoost => one("learning_rate", &[0.05, 0.1]),
        Bvar => one("lambda1", &[0.1, 0.2, 0.5]),
        MfVar => one("p", &[1.0, 2.0]),
        Dfm => one("factor_lags", &[1.0, 2.0]),
        Midas => one("lags", &[6.0, 12.0]),
        Arma | RandomForest | Mlp | Lstm => vec![BTreeMap::new()],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: MethodologyId,
    pub hyperparams: BTreeMap<String, f64>,
    pub refit_policy: RefitPolicy,
    pub seed: u64,
    /// Ragged-edge fill for backends built on design matrices.
    #[serde(default = "default_impute")]
    pub impute: ImputeStrategy,
}

fn default_impute() -> ImputeStrategy {
    ImputeStrategy::MeanFill
}

impl ModelSpec {
    /// Schema defaults and the methodology's default refit policy.
    pub fn new(id: MethodologyId) -> Self {
        ModelSpec {
            id,
            hyperparams: schema(id).iter().map(|h| (h.name.to_string(), h.default)).collect(),
            refit_policy: RefitPolicy::default_for(id),
            seed: 0,
            impute: default_impute(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.hyperparams.insert(name.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_impute(mut self, strategy: ImputeStrategy) -> Self {
        self.impute = strategy;
        self
    }

    pub fn with_refit(mut self, policy: RefitPolicy) -> Self {
        self.refit_policy = policy;
        self
    }

    /// Overlays `overrides` on this spec's hyperparameters.
    pub fn merged(&self, overrides: &BTreeMap<String, f64>) -> Self {
        let mut s = self.clone();
        s.hyperparams.extend(overrides.iter().map(|(k, v)| (k.clone(), *v)));
        s
    }

    pub fn validate(&self) -> Result<()> {
        let sch = schema(self.id);
        for (name, v) in &self.hyperparams {
            let Some(h) = sch.iter().find(|h| h.name == name) else {
                return Err(Error::Schema {
                    id: self.id,
                    message: format!("unknown hyperparameter `{name}`"),
                });
            };
            let bad_int = h.integer && v.fract() != 0.0;
            if !v.is_finite() || *v < h.min || *v > h.max || bad_int {
                return Err(Error::Schema {
                    id: self.id,
                    message: format!("`{name}` = {v} outside [{}, {}]{}", h.min, h.max, if h.integer { " (integer)" } else { "" }),
                });
            }
        }
        Ok(())
    }

    /// Value of `name`, falling back to the schema default.
    pub fn get(&self, name: &str) -> f64 {
        self.hyperparams.get(name).copied().unwrap_or_else(|| {
            schema(self.id)
                .iter()
                .find(|h| h.name == name)
                .map(|h| h.default)
                .unwrap_or_else(|| panic!("{} has no hyperparameter {name}", self.id))
        })
    }

    pub fn get_usize(&self, name: &str) -> usize {
        self.get(name) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_unknown_names_fail() {
        for id in MethodologyId::ALL {
            let s = ModelSpec::new(id);
            s.validate().unwrap();
            for h in schema(id) {
                assert_eq!(s.get(h.name), h.default);
            }
            let bad = s.clone().with("nonsense", 1.0);
            assert!(matches!(bad.validate(), Err(Error::Schema { .. })));
            for cand in default_grid(id) {
                s.merged(&cand).validate().unwrap();
            }
        }
        let s = ModelSpec::new(MethodologyId::Ridge).with("alpha", -1.0);
        assert!(s.validate().is_err());
        let s = ModelSpec::new(MethodologyId::Ols).with("n_lags", 1.5);
        assert!(s.validate().is_err());
    }

    #[test]
    fn refit_defaults() {
        let refit: Vec<MethodologyId> = MethodologyId::ALL
            .into_iter()
            .filter(|id| RefitPolicy::default_for(*id) == RefitPolicy::RefitEachVintage)
            .collect();
        assert_eq!(refit, vec![MethodologyId::Arma, MethodologyId::Bvar, MethodologyId::MfVar]);
    }
}
