use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = QdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QdError {
    #[error("point {point:?} lies outside the closed cube [-1,1]^n")]
    Domain { point: Vec<f64> },

    #[error("non-finite {what} at {point:?}")]
    Evaluation { what: &'static str, point: Vec<f64> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension {n} unsupported by exhaustive {what}; use the sampled estimate")]
    UnsupportedDimension { n: usize, what: &'static str },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("integration step {step} at t={t} produced a non-finite state (u={u:?}, x={x:?})")]
    Step {
        step: u64,
        t: f64,
        u: Vec<f64>,
        x: Vec<f64>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<QdError>,
    },
}

impl QdError {
    pub fn config(msg: impl Into<String>) -> Self {
        QdError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QdError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches the name of the failing stage to an error.
pub trait StageContext<T> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| QdError::Stage {
            stage: stage(),
            source: Box::new(e),
        })
    }
}
