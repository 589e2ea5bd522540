use thiserror::Error;

use crate::optim::OptimTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("transform length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid time resolution theta = {0}")]
    InvalidTheta(f64),
    #[error("invalid window parameters: {0}")]
    InvalidParams(String),
    #[error("window shift {0} outside [0, 1)")]
    InvalidShift(f64),
    #[error("overlap ratio {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("frame grid does not match the requested transform: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("frequency law reaches {freq} Hz, outside (0, {nyquist}) Hz")]
    NyquistViolation { freq: f64, nyquist: f64 },
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loss became non-finite at iteration {iter}")]
    NonFiniteLoss {
        iter: usize,
        partial: Box<OptimTrace>,
    },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
