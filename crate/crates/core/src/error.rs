use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid exponent {0}: norm exponents must be >= 1")]
    InvalidExponent(f64),
    #[error("unsupported exponent: {0}")]
    UnsupportedExponent(String),
    #[error("zero vector has no Hölder maximizer")]
    ZeroVector,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("task has a single class")]
    DegenerateTask,
    #[error("unknown task index {index} (model has {tasks} tasks)")]
    InvalidTask { index: usize, tasks: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model format: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by floating-point trouble rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
