//! Error type shared by every module in the core crate.

use alloc::string::String;
use core::fmt;

/// Which side of a contrastive sample set failed to fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSide {
    Positive,
    Negative,
}

impl fmt::Display for SampleSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSide::Positive => write!(f, "positive"),
            SampleSide::Negative => write!(f, "negative"),
        }
    }
}

/// Errors produced by the algorithmic core.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Tensor or layer dimensions do not line up.
    Shape(String),
    /// A configuration value violates its invariant.
    Config(String),
    /// A step or position index is outside its valid range.
    Index { index: usize, limit: usize },
    /// A computation produced or received a non-finite value.
    Numeric(String),
    /// Too few eligible states to fill a contrastive sample set.
    Sampling {
        side: SampleSide,
        needed: usize,
        eligible: usize,
    },
    /// A gradient tape was used after being consumed.
    TapeConsumed,
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Shape(msg) => write!(f, "shape error: {msg}"),
            CoreError::Config(msg) => write!(f, "config error: {msg}"),
            CoreError::Index { index, limit } => {
                write!(f, "index {index} out of range (limit {limit})")
            }
            CoreError::Numeric(msg) => write!(f, "numeric error: {msg}"),
            CoreError::Sampling {
                side,
                needed,
                eligible,
            } => write!(
                f,
                "cannot draw {needed} {side} samples: only {eligible} eligible states"
            ),
            CoreError::TapeConsumed => write!(f, "gradient tape already consumed"),
        }
    }
}

pub type Result<T> = core::result::Result<T, CoreError>;
