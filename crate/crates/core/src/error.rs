use thiserror::Error;

/// Errors raised by a task while evaluating the objective.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("parameter vector has {found} components, task expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("parameter component {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("bandwidth component {index} must be strictly positive, got {value}")]
    InvalidBandwidth { index: usize, value: f64 },

    #[error("bandwidth component {index} = {value} outside [{min}, {max}]")]
    BandwidthOutOfRange {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("uniform variate must lie in (0, 1], got {0}")]
    InvalidUniform(f64),

    #[error("invalid sample count {count}: {reason}")]
    InvalidCount { count: usize, reason: &'static str },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("estimator `{estimator}` is not supported by task `{task}`")]
    UnsupportedEstimator { estimator: String, task: String },

    #[error("invalid step size {0}; must be finite and > 0")]
    InvalidStep(f64),

    #[error("task evaluation failed at offset {tau:?}: {source}")]
    Task {
        tau: Option<Vec<f64>>,
        #[source]
        source: TaskError,
    },

    #[error("non-finite gradient component {component} at iteration {iteration}")]
    NonFiniteGradient { iteration: usize, component: usize },

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn task(tau: Option<&[f64]>, source: TaskError) -> Self {
        Error::Task {
            tau: tau.map(<[f64]>::to_vec),
            source,
        }
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
