use thiserror::Error;

use crate::aggregate::Encoding;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed binary header: {0}")]
    BadHeader(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("row {row} has (near-)zero norm")]
    ZeroRow { row: usize },

    #[error("feature set is empty")]
    EmptyFeatureSet,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("kernel row {row} has non-positive sum")]
    ZeroRowSum { row: usize },

    #[error("kernel entry ({row}, {col}) is negative")]
    NonPositiveKernel { row: usize, col: usize },

    #[error("matrix is not symmetric (max deviation {deviation:e})")]
    NotSymmetric { deviation: f64 },

    #[error("matrix is not positive semi-definite (eigenvalue {eigenvalue:e})")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("eigendecomposition did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for {len} features")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("encoding mismatch: expected {expected:?}, found {found:?}")]
    EncodingMismatch { expected: Encoding, found: Encoding },

    #[error("descriptor is identically zero")]
    ZeroDescriptor,

    #[error("matrix is zero")]
    ZeroMatrix,

    #[error("exponent {0} outside (0, 1]")]
    InvalidExponent(f64),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("class {0} has no training examples")]
    EmptyClass(usize),
}
