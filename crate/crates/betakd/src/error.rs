//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("logit vector invalid: {0}")]
    InvalidLogits(String),
    #[error("probability vector invalid: {0}")]
    InvalidProbs(String),
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("divergence spec invalid: {0}")]
    InvalidSpec(String),
    #[error("vector norm below 1e-12; cosine distance undefined for degenerate input")]
    ZeroVector,
    #[error("sequence length mismatch: teacher {teacher} vs student {student}")]
    LengthMismatch { teacher: usize, student: usize },
    #[error("token id {token} out of range for vocabulary {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("hessian determinant must be positive, got {0}")]
    NonPositiveDeterminant(f64),
    #[error("loss must be positive, got {0}")]
    NonPositiveLoss(f64),
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("beta channel is in mode {actual}, operation requires {required}")]
    WrongMode {
        actual: &'static str,
        required: &'static str,
    },
    #[error("quadrature did not converge: last delta {delta} at {intervals} intervals")]
    QuadratureNotConverged { delta: f64, intervals: usize },
    #[error("teacher pretraining diverged: validation ce {current} exceeds initial {initial} at step {step}")]
    Diverged {
        step: usize,
        initial: f64,
        current: f64,
    },
    #[error(
        "non-finite loss at step {step} (theta checksum {checksum:#018x}); offending batch: {batch:?}"
    )]
    NonFiniteLoss {
        step: usize,
        checksum: u64,
        batch: Vec<usize>,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
