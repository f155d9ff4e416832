use thiserror::Error;

use crate::model_api::MethodologyId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown series: {0}")]
    UnknownSeries(String),

    #[error("http failure for {code}: {message}")]
    Http { code: String, message: String },

    #[error("malformed cache file {path}: {message}")]
    MalformedCache { path: String, message: String },

    #[error("duplicate series id: {0}")]
    DuplicateId(String),

    #[error("zero base in growth computation for {series} at {date}")]
    ZeroBase { series: String, date: String },

    #[error("empty partition: {0}")]
    EmptyPartition(String),

    #[error("all-missing column {0} inside fit window")]
    AllMissing(String),

    #[error("zero variance column {0}")]
    ZeroVariance(String),

    #[error("hyperparameter schema error for {id}: {message}")]
    Schema { id: MethodologyId, message: String },

    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("{id} estimation failed: {cause}")]
    Backend { id: MethodologyId, cause: String },

    #[error("estimation did not converge: {0}")]
    NonConvergence(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("EM monotonicity violated: loglik fell from {prev} to {next}")]
    EmMonotonicity { prev: f64, next: f64 },

    #[error("training diverged (non-finite loss); reduce the step size")]
    Divergence,

    #[error("missing cells: {0}")]
    MissingCells(String),

    #[error("all tuning candidates failed: {0}")]
    TuneFailed(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
