use thiserror::Error;

/// Failure while evaluating an expression at a point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("evaluation domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: &'static str },
    #[error("dimension mismatch: expected {expected} variables, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Problem-file syntax or validation error with a 1-based position.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, column: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }
}

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("point is not feasible (violation {violation:e})")]
    Infeasible { violation: f64 },
    #[error("multiplier vector does not match the active sets")]
    MultiplierShape,
}

/// Invalid regularization or solver parameter.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameter `{name}` = {value}: {requirement}")]
pub struct ParameterError {
    pub name: &'static str,
    pub value: f64,
    pub requirement: &'static str,
}

pub(crate) fn require(
    ok: bool,
    name: &'static str,
    value: f64,
    requirement: &'static str,
) -> Result<(), ParameterError> {
    if ok {
        Ok(())
    } else {
        Err(ParameterError {
            name,
            value,
            requirement,
        })
    }
}
