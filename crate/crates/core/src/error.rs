use thiserror::Error;

/// Errors produced by the distribution, divergence and training routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("every log-weight is -inf; nothing to normalize")]
    AllZero,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("distribution needs at least {min} entries, got {got}")]
    TooShort { min: usize, got: usize },

    #[error("non-finite value at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("negative probability at index {index}: {value}")]
    Negative { index: usize, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid covers only {mass:.6} of the mixture mass (need >= 0.999)")]
    InsufficientCoverage { mass: f64 },

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error("mixture has empty support")]
    EmptySupport,

    /// The divergence is +inf because the first argument puts mass where the
    /// second has none.
    #[error("support violation at index {index}: divergence is +inf")]
    SupportViolation { index: usize },

    #[error("alpha-beta parameters outside the supported region: a={a}, b={b}")]
    DegenerateParams { a: f64, b: f64 },

    #[error("mixture weight is 0/0 at index {index} (p and q both zero)")]
    IndeterminateWeight { index: usize },

    #[error("loss evaluation was non-finite")]
    NonFiniteLoss,

    #[error("loss diverged at step {step}: {reason}")]
    DivergedLoss { step: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors that stand for an infinite divergence value.
    pub fn is_support_violation(&self) -> bool {
        matches!(self, Error::SupportViolation { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_same_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}
