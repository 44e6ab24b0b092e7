use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid flux definition: {0}")]
    InvalidFlux(String),

    #[error("argument {value} outside working range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("no conjugate point for w = {w} inside the working range")]
    NoConjugate { w: f64 },

    #[error("invalid piecewise constant function: {0}")]
    InvalidPwfun(String),

    #[error("undulation decomposition requires a nonnegative function (min = {min})")]
    NegativeInput { min: f64 },

    #[error("invalid gauge: {0}")]
    InvalidGauge(String),

    #[error("invalid riemann data: {0}")]
    InvalidRiemann(String),

    #[error("polygonal flux grid would exceed {cap} nodes ({requested} requested)")]
    GridTooLarge { cap: usize, requested: usize },

    #[error("event budget of {cap} collisions exhausted at t = {time}")]
    EventStorm { cap: usize, time: f64 },

    #[error("flux is convex-degenerate on the requested interval: {0}")]
    NotConvex(String),

    #[error("parameter search failed: {0}")]
    ParameterSearch(String),

    #[error("scenario parse error at line {line}: {msg}")]
    ScenarioParse { line: usize, msg: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("check failed: {0}")]
    CheckFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
