//! Error type shared by every module.

use thiserror::Error;

use crate::training::RunLog;

/// Everything that can go wrong in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A pairwise noise map reuses a source or a target label.
    #[error("invalid pairing: {0}")]
    InvalidPairing(String),

    /// A class has no spread, so its principal direction is undefined.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A binary or text input could not be decoded.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// One or more configuration problems, reported together.
    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    /// The backward correction needs an invertible, well-conditioned matrix.
    #[error("correction unavailable: {0}")]
    CorrectionUnavailable(String),

    /// Gradients were requested for a loss that has none.
    #[error("loss {0} is not differentiable")]
    NotDifferentiable(String),

    /// A loss or gradient became NaN or infinite during training.
    #[error("non-finite {what} at epoch {epoch}, batch {batch} (loss {loss})")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
        loss: String,
    },

    /// A bound was requested outside the regime in which it holds.
    #[error("regime violation: {0}")]
    Regime(String),

    /// Array sizes do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A dataset lacks the label track an operation needs.
    #[error("missing label track: {0}")]
    MissingTrack(String),

    /// The requested combination is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Training stopped early; the log holds every epoch completed before the failure.
    #[error("training aborted after {} epoch(s): {source}", .log.records.len())]
    Aborted {
        log: Box<RunLog>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand for a single-message configuration error.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub(crate) fn parse(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    /// True for failures the command line reports with the numeric-failure exit code.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. }
            | Error::CorrectionUnavailable(_)
            | Error::DegenerateGeometry(_)
            | Error::Regime(_) => true,
            Error::Aborted { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
