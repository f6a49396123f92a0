//! Experiment orchestration: scenario configs, the static and DSA sweeps,
//! band scans and their reports.

mod config;
mod report;
mod runner;

use std::path::PathBuf;

use thiserror::Error;

use crate::link::LinkError;
use crate::protocol::ProtocolError;
use crate::rf_env::EnvError;
use crate::sensor::SensorError;

pub use config::{EnvironmentSpec, ModeConfig, PuConfig, PuSweep, ScanConfig, ScenarioConfig};
pub use report::{emit, format_compare, format_table, write_compare, write_dsa_traces, write_rows, write_seed_rows};
pub use runner::{
    chunk_containing, compare, initial_rendezvous, run_dsa, run_dsa_point, run_scan, run_static, run_static_point,
    CompareRow, DsaResult, DsaRun, SeedRow, SweepResult, SweepRow,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Link(#[from] LinkError),
}
