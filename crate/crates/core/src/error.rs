use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coincident points: Green's function is singular at zero distance")]
    CoincidentPoints,

    #[error("point coincides with receiver {receiver}")]
    OnReceiver { receiver: usize },

    #[error("pixel {pixel} coincides with receiver {receiver}")]
    PixelOnReceiver { pixel: usize, receiver: usize },

    #[error("source {source_index} coincides with receiver {receiver}")]
    SourceOnReceiver { source_index: usize, receiver: usize },

    #[error("source {source_index} is not within one grid spacing of any grid node")]
    SourceOffGrid { source_index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("step size too large: primal_step * |D|^2 = {product:.6} must be < 1")]
    StepSize { product: f64 },

    #[error("solver diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("gamma trial {trial} (seed {seed}) failed: {message}")]
    GammaTrial {
        trial: usize,
        seed: u64,
        message: String,
    },

    #[error(
        "noise collector infeasible: accepted {accepted} of {requested} columns; \
         closest rejected candidate conflicted with column {conflict} at coherence {value:.6}"
    )]
    CollectorInfeasible {
        accepted: usize,
        requested: usize,
        conflict: usize,
        value: f64,
    },

    #[error(
        "greedy contraction failed at step {step}: residual {residual:.6e} exceeds bound {bound:.6e}"
    )]
    ContractionFailure {
        step: usize,
        residual: f64,
        bound: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("incompatible runs: {0}")]
    Incompatible(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("bad matrix file {path}: {reason}")]
    MatrixFormat { path: PathBuf, reason: String },

    #[error("scenario parse error at line {line}, column {column}: {message}")]
    ScenarioParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("scenario field `{field}`: {message}")]
    ScenarioField { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn field(field: impl Into<String>, message: impl Into<String>) -> Error {
        Error::ScenarioField {
            field: field.into(),
            message: message.into(),
        }
    }
}
