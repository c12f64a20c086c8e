use thiserror::Error;

use crate::linalg::CMat;
use crate::sensing::MusicResult;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A supplied beamformer or vector violates a hardware constraint
    /// (constant modulus, codebook membership).
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    /// MUSIC found fewer peaks than requested, or the spectrum is flat.
    /// The partial result is kept for inspection.
    #[error("estimation failure: {reason}")]
    EstimationFailure {
        reason: String,
        partial: Option<Box<MusicResult>>,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The iterative precoder solver ran out of iterations before reaching
    /// a feasible point.
    #[error("infeasible result after {iterations} iterations (max violation {max_violation:e})")]
    Infeasible {
        iterations: usize,
        max_violation: f64,
        last_iterate: Box<CMat>,
    },

    /// The null-space projector removed the whole uplink direction.
    #[error("degenerate combiner: {0}")]
    DegenerateCombiner(String),

    /// Wraps an error raised inside one step of the beamformer design loop.
    #[error("optimizer step {step} ({what}): {source}")]
    Step {
        step: u8,
        what: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_step(self, step: u8, what: &'static str) -> Self {
        Error::Step {
            step,
            what,
            source: Box::new(self),
        }
    }

    /// Strips any step attribution and returns the innermost error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
