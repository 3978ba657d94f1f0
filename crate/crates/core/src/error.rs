use std::path::PathBuf;

use crate::level::ModelLevel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-physical state: {0}")]
    NonPhysicalState(String),

    #[error("pressure exhausted at x = {position} m (radicand {radicand:e})")]
    PressureExhausted { position: f64, radicand: f64 },

    #[error(
        "nonlinear solver diverged after {iterations} iterations (scaled residual {residual:e})"
    )]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("refinement target unreachable after {iterations} iterations (relative error {error:e} > tol {tol:e})")]
    Unsatisfiable {
        iterations: usize,
        error: f64,
        tol: f64,
    },

    #[error("non-positive cost delta {delta:e} for {kind} refinement at model {level}")]
    DegenerateCostDelta {
        level: ModelLevel,
        kind: &'static str,
        delta: f64,
    },

    #[error("no refinement scheme within depth {max_depth} satisfies the tolerance")]
    Infeasible { max_depth: u32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("window {index}: {source}")]
    Window {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Strips `Sample`/`Window` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Sample { source, .. } | Error::Window { source, .. } => source.root(),
            other => other,
        }
    }
}
