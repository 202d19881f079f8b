//! Scalar quantities for reporting and for checking the convergence theory:
//! heterogeneity at the optimum, the shuffling radius, Lyapunov functions,
//! noise-floor scaling, and per-epoch run records.

mod floor;
mod hetero;
mod lyapunov;
mod record;
mod sigma_rad;

use thiserror::Error;

pub use floor::{fit_log_slope, floor_scaling_probe, FloorPoint, FloorProbe, STEADY_FRACTION};
pub use hetero::{hetero_constants, sigma_rad_bounds, HeterogeneityConstants};
pub use lyapunov::{
    diana_nastya_floor, diana_rr_floor, lyapunov_diana_nastya, lyapunov_diana_rr, nastya_optimal_shifts,
};
pub use record::{write_csv, RunRecord, CSV_HEADER};
pub use sigma_rad::{estimate_sigma_rad, sigma_rad_exhaustive, SigmaRadEstimate};

use crate::algorithms::AlgorithmError;
use crate::objective::ObjectiveError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
}
