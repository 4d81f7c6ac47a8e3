//! Discrete transport semiflow `V_{t,s}`, kernel operator `B_t`, full semiflow
//! `S_{t,s}` and their exact transposes on a truncated uniform grid.

mod grid;
mod io;
mod propagator;

use thiserror::Error;

use crate::flow::FlowError;

pub use grid::{abs_pairing, pairing, DualGridField, GridField, TruncatedBox};
pub use io::{read_field_binary, write_field_binary, write_field_csv, write_fields_csv, FieldSidecar};
pub use propagator::{
    interpolation_stencil, two_grid_study, KernelQuadrature, Propagator, PropagatorConfig, Splitting, TwoGridStudy,
};

#[derive(Debug, Error)]
pub enum SemiflowError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid propagator configuration: {0}")]
    InvalidConfig(String),
    #[error("time {t} is not a multiple of the step {dt}")]
    TimeNotOnGrid { t: f64, dt: f64 },
    #[error("backward evolution requested from {s} to {t}")]
    BackwardInterval { s: f64, t: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("field sidecar: {0}")]
    Sidecar(String),
}
