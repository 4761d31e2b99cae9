use thiserror::Error;

use crate::metrics::WorkCurve;
use crate::solver::Diagnostics;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },

    #[error("operator is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("basis is rank deficient at element {index}")]
    RankDeficient { index: usize },

    #[error("operator lies outside the control algebra (residual {residual:.3e})")]
    NotInAlgebra { residual: f64 },

    #[error("degenerate scenario: {0}")]
    DegenerateScenario(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(Box<Diagnostics>),

    #[error("algebra does not have su(2) structure (deviation {deviation:.3e})")]
    NotSu2 { deviation: f64 },

    #[error("{0} is the zero operator")]
    ZeroOperator(&'static str),

    #[error("problem too large for dense treatment: {0}")]
    TooLarge(String),

    #[error("not a density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("target work {target} exceeds curve maximum {max}")]
    Unreachable { target: f64, max: f64 },

    #[error("work curve has not reached its plateau")]
    PlateauNotReached,

    #[error("uncontrollable Hamiltonian violates the centralizer condition (residual {residual:.3e})")]
    CentralizerViolation { residual: f64 },

    #[error("state has no controllable component")]
    DegenerateState,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sweep stopped after {} samples: {cause}", curve.samples.len())]
    PartialCurve { curve: Box<WorkCurve>, cause: Box<Error> },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
