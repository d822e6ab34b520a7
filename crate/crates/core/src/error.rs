use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// An operator with unbounded rates was applied to a sequence whose
    /// tail mass has unknown location.
    #[error("cannot propagate tail bound: {0}")]
    UnboundedTail(String),

    #[error("column {index} is not dissipative (deficit {deficit:e})")]
    Dissipativity { index: usize, deficit: f64 },

    #[error("model file: {0}")]
    Parse(String),

    #[error("{0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        invalid(format!("lambda must be positive and finite, got {lambda}"))
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        invalid(format!("time must be nonnegative and finite, got {t}"))
    }
}
