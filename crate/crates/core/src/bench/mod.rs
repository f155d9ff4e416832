//! Benchmark driver behind the `nowcast` binary.

pub mod config;
pub mod report;
pub mod run;

pub use config::{PeriodConfig, RunConfig, TuneConfig};
pub use report::{cmd_evaluate, cmd_report, evaluate, Evaluation, PeriodTables};
pub use run::{cmd_fetch, cmd_run, load_cube, load_panel, CellFailure, RunSummary};
