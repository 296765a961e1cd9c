//! Estimators and diagnostics built on top of the simulation engines.

pub mod distance;
pub mod fclt;
pub mod fixation;
pub mod heuristics;
pub mod probes;
pub mod renewal;

use thiserror::Error;

use crate::input::InputError;
use crate::pit::PitError;
use crate::quad::QuadratureError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("need at least {needed} {what}, got {got}")]
    Insufficient {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("traces are sampled on different grids: {0}")]
    GridMismatch(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Pit(#[from] PitError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}
