use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is outside {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid density field: {0}")]
    InvalidField(String),

    #[error("invalid position state: {0}")]
    InvalidState(String),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("inversion of F did not reach tolerance {tol:e} for target {target}")]
    InversionFailed { target: f64, tol: f64 },

    #[error("rate fit undefined: {0}")]
    RateFit(String),

    #[error("ordering violated after update: {0}")]
    OrderViolation(String),
}
