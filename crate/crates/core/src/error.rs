use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A violated clause of the mixing-matrix assumptions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MixingError {
    #[error("mixing matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("entry w[{i}][{j}] = {value} is negative")]
    NegativeEntry { i: usize, j: usize, value: f64 },
    #[error("entry w[{i}][{j}] = {value} is nonzero but ({i},{j}) is not an edge")]
    OffGraph { i: usize, j: usize, value: f64 },
    #[error("w[{i}][{j}] = {a} differs from w[{j}][{i}] = {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
    #[error("eigenvalue {value} lies outside (-1, 1]")]
    Spectrum { value: f64 },
    #[error("second largest eigenvalue magnitude is {varsigma}; the mixing does not contract")]
    NoSpectralGap { varsigma: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no connected graph after {attempts} draws; parameters are too sparse")]
    Disconnected { attempts: usize },
    #[error(transparent)]
    Mixing(#[from] MixingError),
    #[error("label {value} at sample {index} is not in {{-1, +1}}")]
    InvalidLabel { index: usize, value: f64 },
    #[error("regularization is degenerate: max |A^T b| is zero")]
    DegenerateRegularization,
    #[error("configuration: {0}")]
    Config(String),
    #[error(
        "inner solver hit its cap of {inner} iterations at outer iteration {outer} (rho = {rho})"
    )]
    InnerCapExceeded { rho: f64, outer: usize, inner: usize },
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
