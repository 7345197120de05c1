use thiserror::Error;

/// Errors raised across the library. Each variant names the failure kind a
/// caller can act on; the payload carries context for diagnostics.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("quadrature did not converge: {0}")]
    NonConvergent(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("target {target} not bracketed by [{lo_value}, {hi_value}]")]
    NotBracketed { target: f64, lo_value: f64, hi_value: f64 },
    #[error("stop rule violated: {0}")]
    RuleViolation(String),
    #[error("payoff not integrable against the hazard: {0}")]
    NotIntegrable(String),
    #[error("hazard is finite at the domain supremum ({0}); the model is degenerate")]
    LambdaFinite(f64),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid strike {0}: must be positive")]
    InvalidStrike(f64),
    #[error("path left the state interval at t = {time}: value {value}")]
    DomainExit { time: f64, value: f64 },
    #[error("empty sample")]
    Empty,
    #[error("syntax error at byte {offset}: expected {}", expected.join(", "))]
    Syntax { offset: usize, expected: Vec<String> },
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
