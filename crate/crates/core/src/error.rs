use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The fast residual formula produced a clearly negative squared norm,
    /// which means the MTTKRP it was given does not belong to the current
    /// factors.
    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),

    /// A cached intermediate was about to be read with outdated factor
    /// versions. Never expected outside of a bug.
    #[error("internal logic error: {0}")]
    InternalLogic(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that indicate a broken invariant rather than bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            Error::NumericalInconsistency(_) | Error::InternalLogic(_) | Error::InvalidState(_)
        )
    }
}

macro_rules! invalid_arg {
    ($($arg:tt)*) => {
        $crate::Error::InvalidArgument(format!($($arg)*))
    };
}
pub(crate) use invalid_arg;
