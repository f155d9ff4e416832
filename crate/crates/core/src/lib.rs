//! Benchmark harness for GDP nowcasting methodologies: data ingestion,
//! vintage simulation, twelve model backends, evaluation and reporting.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod bench;
pub mod calendar;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod model_api;
pub mod models;
pub mod optim;
pub mod preprocess;
pub mod vintage;

pub use calendar::{Month, Quarter, QuarterRange};
pub use error::{Error, Result};
