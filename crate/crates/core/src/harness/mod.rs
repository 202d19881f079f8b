//! Configuration, dataset ingestion, experiment runs, stepsize sweeps,
//! reproduction scripts and the command-line front end.

pub mod cli;
pub mod config;
pub mod data;
pub mod experiment;
pub mod reproduce;
pub mod sweep;
pub mod synthetic;

use thiserror::Error;

pub use cli::cli_main;
pub use config::{DataConfig, ExperimentConfig, MethodConfig, SamplingConfig, StepsizePreset};
pub use data::{class_counts, load_libsvm, partition, PartitionKind, PartitionRule};
pub use experiment::{build_problem, Experiment, Multipliers};
pub use sweep::{pair_grid, sweep, SweepEntry, SweepReport};
pub use synthetic::{make_synthetic, resolve_lambda, synthetic_clients, LambdaRule, SyntheticSpec};

use crate::algorithms::AlgorithmError;
use crate::compressors::CompressorError;
use crate::diagnostics::DiagnosticsError;
use crate::objective::ObjectiveError;
use crate::stepsizes::StepsizeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("run diverged at round {round}")]
    Diverged { round: u64 },
    #[error("every run diverged: {0}")]
    AllDiverged(String),
}

impl HarnessError {
    /// 1 for configuration problems, 2 for divergence, 3 for I/O and data files.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Diverged { .. } | HarnessError::AllDiverged(_) => 2,
            HarnessError::Io(_) | HarnessError::Data(_) => 3,
        }
    }
}

impl From<AlgorithmError> for HarnessError {
    fn from(e: AlgorithmError) -> Self {
        match e {
            AlgorithmError::Diverged { round } => HarnessError::Diverged { round },
            other => HarnessError::Config(other.to_string()),
        }
    }
}

impl From<DiagnosticsError> for HarnessError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Algorithm(a) => a.into(),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

macro_rules! config_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                HarnessError::Config(e.to_string())
            }
        }
    )*};
}

config_error_from!(ObjectiveError, CompressorError, StepsizeError);
