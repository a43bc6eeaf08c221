use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {axis} = {n} must be even and at least 4")]
    InvalidGridSize { axis: &'static str, n: usize },

    #[error("domain length {axis} = {l} must be positive and finite")]
    InvalidGridLength { axis: &'static str, l: f64 },

    #[error("array shape {found:?} does not match grid shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value: {what}")]
    NonFinite { what: String },

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("PFC constant C0 = {c0} too small; minimum admissible value is {min}")]
    PfcConstantTooSmall { c0: f64, min: f64 },

    #[error("PFC radicand below {threshold:e} (min {min:e} at phi = {phi_at_min}); phi range [{phi_min}, {phi_max}]")]
    RadicandTooSmall {
        threshold: f64,
        min: f64,
        phi_at_min: f64,
        phi_min: f64,
        phi_max: f64,
    },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("relaxation parameter eta = {0} outside [0, 1]")]
    EtaOutOfRange(f64),

    #[error("relaxation is infeasible at xi = 1: a + b + c = {value:e} exceeds tolerance {tol:e}")]
    Infeasible { value: f64, tol: f64 },

    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),

    #[error("dense oracle limited to {max} grid points, got {n}")]
    OracleTooLarge { n: usize, max: usize },

    #[error("invariant violated at step {step}: {what}")]
    InvariantViolation { step: usize, what: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed snapshot {path}: {reason}")]
    MalformedSnapshot { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
