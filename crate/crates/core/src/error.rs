use thiserror::Error;

use crate::variational::VariationalSolution;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("resource bound exceeded: {what} (estimated {estimated}, limit {limit})")]
    Resource {
        what: String,
        estimated: f64,
        limit: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("conditioning assignment has zero probability")]
    ZeroProbability,

    #[error("solver did not converge after {restarts} restarts (best value {})", best.value)]
    NotConverged {
        restarts: usize,
        best: Box<VariationalSolution>,
    },

    #[error("threshold equation: {0}")]
    Threshold(String),

    #[error("incremental count audit failed at step {step}: maintained {maintained}, recount {recount}")]
    Audit {
        step: u64,
        maintained: u64,
        recount: u64,
    },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Config(_) | Error::Parse { .. } | Error::Dimension { .. } => 2,
            Error::Resource { .. } => 3,
            Error::NotConverged { .. } => 4,
            _ => 1,
        }
    }

    /// Short machine-readable class name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Resource { .. } => "resource",
            Error::Dimension { .. } => "dimension",
            Error::ZeroProbability => "zero_probability",
            Error::NotConverged { .. } => "not_converged",
            Error::Threshold(_) => "threshold",
            Error::Audit { .. } => "audit",
            Error::Generation(_) => "generation",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
