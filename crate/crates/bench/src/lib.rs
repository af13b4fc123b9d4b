//! Experiment driver for the tuned FWI: run grids, timing records, summaries.

pub mod config;
pub mod experiment;
pub mod record;
pub mod report;
pub mod scenario;

use autochunk::fwi::FwiError;
use autochunk::sched::SchedError;
use autochunk::tuner::TunerError;
use autochunk::wave::WaveError;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, CellRunner, ExperimentReport, FwiRunner, RunOutcome};
pub use record::{CellKey, RunRecord};
pub use scenario::{Scenario, SchedulerLabel};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("record schema: {0}")]
    Schema(String),
    #[error("output: {0}")]
    Output(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Fwi(#[from] FwiError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Tuner(#[from] TunerError),
}
