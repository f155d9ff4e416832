//! Uniform fit/predict contract over all methodologies.

mod backend;
mod id;
mod spec;
mod tune;

use serde::{Deserialize, Serialize};

pub use backend::{fit, predict, FittedModel, LearnedState, LstmState, TabularModel, TabularState, VarState};
pub use id::MethodologyId;
pub use spec::{default_grid, schema, HyperParam, ModelSpec, RefitPolicy};
pub use tune::tune;

use crate::calendar::Quarter;
use crate::vintage::VintageOffset;

/// One cell of the prediction cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub methodology: MethodologyId,
    pub period: String,
    pub quarter: Quarter,
    pub offset: VintageOffset,
    pub value: f64,
}
