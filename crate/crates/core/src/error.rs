use std::fmt;

use thiserror::Error;

/// Where a numerical failure happened.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub stage: &'static str,
    pub worker: Option<usize>,
    pub episode: Option<usize>,
    pub step: Option<usize>,
    pub detail: String,
}

impl Diagnostics {
    pub fn new(stage: &'static str, detail: impl Into<String>) -> Self {
        Self {
            stage,
            detail: detail.into(),
            ..Default::default()
        }
    }

    pub fn worker(mut self, worker: usize) -> Self {
        self.worker = Some(worker);
        self
    }

    pub fn episode(mut self, episode: usize) -> Self {
        self.episode = Some(episode);
        self
    }

    pub fn step(mut self, step: usize) -> Self {
        self.step = Some(step);
        self
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.stage)?;
        if let Some(w) = self.worker {
            write!(f, " worker={w}")?;
        }
        if let Some(e) = self.episode {
            write!(f, " episode={e}")?;
        }
        if let Some(s) = self.step {
            write!(f, " step={s}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter `{name}` = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("non-finite value {0}")]
    NonFinite(Diagnostics),

    #[error("model singularity: {0}")]
    Singular(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::DimensionMismatch { .. } | Error::OutOfBounds { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
