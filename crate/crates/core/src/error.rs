//! Error type shared across the crate.

use alloc::string::String;
use core::fmt;

/// Errors reported by constructors and solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix or signal dimensions do not line up.
    Shape(String),
    /// An eigenvalue modulus exceeds the stability margin 1 - delta.
    Unstable { index: usize, modulus: f64 },
    /// A Stein denominator 1 - a_i * b_j is too close to zero.
    NearSingular { row: usize, col: usize, magnitude: f64 },
    /// A scalar argument is outside its admissible range.
    Domain(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::Unstable { index, modulus } => write!(
                f,
                "eigenvalue {index} has modulus {modulus:e}, above the stability margin"
            ),
            Error::NearSingular { row, col, magnitude } => write!(
                f,
                "Stein denominator at ({row}, {col}) is near-singular: |a_i b_j| = {magnitude:e}"
            ),
            Error::Domain(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
