//! Error type shared by every module in the core crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors produced by tensor ops, blocks, the model, and the data generators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Incompatible tensor shapes for an operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A configuration field is out of its valid range.
    InvalidConfig { field: &'static str, msg: String },
    /// A non-finite value (NaN or infinity) was produced or detected.
    NonFinite { stage: String },
    /// A numeric routine failed (decomposition, divergence, ...).
    Numeric { msg: String },
    /// Iterative solver did not converge; carries the tail of the residual history.
    SolverDiverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {lhs:?} vs {rhs:?}")
            }
            Error::InvalidConfig { field, msg } => write!(f, "invalid config `{field}`: {msg}"),
            Error::NonFinite { stage } => write!(f, "non-finite value detected at {stage}"),
            Error::Numeric { msg } => write!(f, "numeric failure: {msg}"),
            Error::SolverDiverged {
                iterations,
                residual,
                ..
            } => write!(
                f,
                "solver did not converge after {iterations} iterations (residual {residual:e})"
            ),
        }
    }
}

impl core::error::Error for Error {}
