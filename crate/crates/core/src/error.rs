use thiserror::Error;

use crate::planner::RunStats;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// The constraint Jacobian (or the augmented dynamics matrix) lost rank.
    #[error("singular configuration: {0}")]
    Singularity(String),

    #[error("chart lift did not converge after {iterations} iterations (residual {residual:e})")]
    LiftDiverged { iterations: usize, residual: f64 },

    #[error("point left chart {chart} through the ball boundary only")]
    NoNeighbor { chart: usize },

    #[error("implicit step did not converge after {iterations} iterations (residual {residual:e})")]
    StepDiverged { iterations: usize, residual: f64 },

    #[error("step size {h:e} fell below the minimum {h_min:e}")]
    StepTooSmall { h: f64, h_min: f64 },

    #[error("planner hit the iteration limit ({} samples drawn)", .0.samples)]
    PlanningTimeout(Box<RunStats>),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
