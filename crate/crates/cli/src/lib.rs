//! Experiment harness for the rebound toolkit: log-log slope fitting,
//! grid-style experiment runners with resumable CSV output, and the small
//! text formats shared with the `rebound` binary.

pub mod experiment;
pub mod io;
pub mod slope;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("slope fit needs at least two points, got {0}")]
    NotEnoughPoints(usize),
    #[error("slope fit needs strictly positive coordinates, got ({x}, {y})")]
    NonPositivePoint { x: f64, y: f64 },
    #[error("experiment spec invalid: {0}")]
    InvalidSpec(String),
    #[error("{path}: unexpected header {found:?}, expected {expected:?}")]
    SchemaMismatch {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path}: line {line}: {message}")]
    MalformedRow {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path} holds more rows than the spec produces; remove it to rerun")]
    StaleOutput { path: String },
    #[error("could not build the worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dynamics(#[from] rebound_core::DynamicsError),
    #[error(transparent)]
    Plan(#[from] rebound_core::PlanError),
    #[error(transparent)]
    Eep(#[from] rebound_core::EepError),
    #[error(transparent)]
    Regret(#[from] rebound_core::RegretError),
    #[error(transparent)]
    Sysid(#[from] rebound_core::SysidError),
}
