use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expr: {0}")]
    Parse(#[from] ParseError),
    #[error("expr: {0}")]
    Eval(#[from] EvalError),
    #[error("config: {0}")]
    Config(String),
    #[error("family: {0}")]
    Family(String),
    #[error("critical: {0}")]
    Critical(String),
    #[error("flow: {0}")]
    Flow(String),
    #[error("trees: {0}")]
    Trees(String),
    #[error("complex: {0}")]
    Algebra(String),
    #[error("continuation: {0}")]
    Continuation(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl Error {
    /// True for errors caused by the input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Parse(_) | Error::Config(_))
    }
}
