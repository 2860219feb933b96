use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the attack pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "shape mismatch: expected {expected_channels}x{expected_samples}, got {channels}x{samples}"
    )]
    ShapeMismatch {
        expected_channels: usize,
        expected_samples: usize,
        channels: usize,
        samples: usize,
    },

    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("query budget exhausted: requested {requested}, remaining {remaining} of {budget}")]
    BudgetExhausted {
        requested: u64,
        remaining: u64,
        budget: u64,
    },

    #[error("substitute labels both endpoints as class {label}; boundary lost")]
    BoundaryLost { label: usize },

    #[error("no opposite pair available: {0}")]
    NoOppositePair(String),

    #[error("orthogonal component vanished after {attempts} draws")]
    DegenerateDirection { attempts: usize },

    #[error("malformed epoch file at byte {offset}: {reason}")]
    MalformedFile { offset: u64, reason: String },

    #[error("not enough epochs predicted as class {class}: wanted {wanted}, found {found}")]
    InsufficientClass {
        class: usize,
        wanted: usize,
        found: usize,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, past any stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
