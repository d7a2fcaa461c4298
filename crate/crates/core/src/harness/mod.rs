//! Run configuration, deterministic seeding, ensemble execution, persistence,
//! replay and report generation.

mod config;
mod ensemble;
mod path;
mod record;
mod replay;
mod verify;


use thiserror::Error;

pub use config::{DataConfig, RunConfig, VerifyConfig, CONFIG_SCHEMA};
pub use ensemble::{
    read_records, read_records_file, run_ensemble, run_paths, worker_count, write_records, write_records_file,
    WORKERS_ENV,
};
pub use path::{initial_data, RunContext};
pub use record::{LevelTrace, PathRecord, PathStatus, RunHeader, PATH_SCHEMA, RUN_SCHEMA};
pub use replay::{compare_records, is_sample_supersequence, replay, replay_in, ReplayReport};
pub use verify::{verify, CheckResult, Verdict, VerifyReport, REPORT_SCHEMA};

use crate::cascade::CascadeError;
use crate::noise::NoiseError;
use crate::spectral::SpectralError;
use crate::stopping::StoppingError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("record was produced by config {record}, not {config}")]
    HashMismatch { record: String, config: String },
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
}
