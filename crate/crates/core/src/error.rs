use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid truncation: {0}")]
    InvalidCaps(String),

    #[error("state {state:?} lies outside the box with caps {caps:?}")]
    OutOfBox { state: Vec<usize>, caps: Vec<usize> },

    #[error("linear index {index} out of range for a space of {size} states")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("type index {index} out of range for dimension {dimension}")]
    TypeOutOfRange { index: usize, dimension: usize },

    #[error("{kind} rule of type {type_index} at state {state:?}, t = {time} evaluated to {value}")]
    InvalidRate {
        kind: &'static str,
        type_index: usize,
        state: Vec<usize>,
        time: f64,
        value: f64,
    },

    #[error(
        "{kind} rate of type {type_index} at state {state:?}, t = {time} is {value}, \
         outside the declared range [{lo}, {hi}]"
    )]
    BoundViolation {
        kind: &'static str,
        type_index: usize,
        state: Vec<usize>,
        time: f64,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integration step {step:e} underflows the minimum step")]
    StepUnderflow { step: f64 },

    #[error("normalization drift {drift:e} at t = {time} exceeds {limit:e}; stepping too coarse")]
    NormalizationDrift { drift: f64, time: f64, limit: f64 },

    #[error("tail mass {mass:e} at t = {time} exceeds threshold {threshold:e}; truncation too small")]
    TailMassExceeded { mass: f64, time: f64, threshold: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
