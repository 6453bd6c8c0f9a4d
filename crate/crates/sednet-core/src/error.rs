//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors produced by the engine.
///
/// Every variant carries a human-readable message; shape errors always name
/// both offending shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Tensor shapes are incompatible with the requested operation.
    Shape(String),
    /// A configuration violates its invariants.
    Config(String),
    /// An input value is outside its documented domain.
    Validation(String),
    /// A non-finite value surfaced where the contract requires finite math.
    Numeric(String),
    /// A dataset or volume is malformed.
    Data(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
