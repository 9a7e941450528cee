use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("degenerate window: frame operator diagonal is {value} at sample {index}")]
    DegenerateWindow { index: usize, value: f64 },

    #[error(
        "synthesis left an imaginary residue of {0:e}; spectrogram is not conjugate-symmetric"
    )]
    ImaginaryResidue(f64),

    #[error("gap at columns {start}..={end}: {reason}")]
    Context {
        start: usize,
        end: usize,
        reason: String,
    },

    #[error("solver diverged at iteration {iteration} (outer {outer})")]
    Divergence { outer: usize, iteration: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(expected: (usize, usize), got: (usize, usize)) -> Self {
        Error::ShapeMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            got: format!("{}x{}", got.0, got.1),
        }
    }
}
