use std::fmt;

use thiserror::Error;

/// A single out-of-domain coordinate reported by [`crate::domain::validate_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub dim: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.dim, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid point: {}", join(.0))]
    InvalidPoint(Vec<Violation>),

    #[error("degenerate trajectory `{0}`: total path length is zero")]
    DegenerateTrajectory(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("infeasible kernel parameter in {block}: {detail}")]
    InfeasibleParameter { block: String, detail: String },

    #[error("numerical failure: {msg} (theta = {theta:?})")]
    Numerical { msg: String, theta: Vec<f64> },

    #[error("optimizer initialization failed: {0}")]
    Initialization(String),

    #[error("query grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            msg: msg.into(),
            theta: Vec::new(),
        }
    }

    /// Attaches the hyperparameter vector to a numerical failure.
    pub fn with_theta(self, theta: &[f64]) -> Self {
        match self {
            Error::Numerical { msg, .. } => Error::Numerical {
                msg,
                theta: theta.to_vec(),
            },
            other => other,
        }
    }

    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_numerical(),
            e => matches!(e, Error::Numerical { .. } | Error::Initialization(_)),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The error with any stage tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
