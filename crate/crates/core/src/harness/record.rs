use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::cascade::ResidualReport;
use crate::heat::EnergyLedger;
use crate::stopping::{LevelSeries, PathStats};

pub const PATH_SCHEMA: &str = "snse.path/1";
pub const RUN_SCHEMA: &str = "snse.run/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum PathStatus {
    Ok,
    Failed { time: f64, message: String },
}

/// Sampled trace of one level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub q0: Vec<f64>,
    pub q_delta: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    /// `ζ_{k-1}` in effect at the sample time.
    pub zeta: Vec<f64>,
    /// `‖u^(k)‖_{H^{1/2}}`.
    pub partial_sum_norm: Vec<f64>,
}

/// One simulated path, written as a single JSONL line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub schema: String,
    pub config_hash: String,
    pub path_id: u64,
    pub seed: u64,
    pub directions: usize,
    pub save_stride: usize,
    pub status: PathStatus,
    /// Sample times, strictly increasing.
    pub times: Vec<f64>,
    pub levels: Vec<LevelTrace>,
    pub stats: PathStats,
    /// Level ledgers at `α = 0` and `α = δ`, frozen at the first grid time `>= τ`.
    pub ledgers: Vec<[EnergyLedger; 2]>,
    /// Weak-form defect of `u^(k_max)` accumulated up to `τ ∧ T`.
    pub residual: Option<ResidualReport>,
}

impl PathRecord {
    pub fn is_ok(&self) -> bool {
        self.status == PathStatus::Ok
    }

    /// `Q` series per level in the form the stopping-time detector reads.
    pub fn level_series(&self) -> Vec<LevelSeries> {
        self.levels
            .iter()
            .map(|l| LevelSeries {
                t: self.times.clone(),
                q0: l.q0.clone(),
                q_delta: l.q_delta.clone(),
            })
            .collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// First line of a records file: the resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema: String,
    pub config_hash: String,
    pub config: RunConfig,
}

impl RunHeader {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            schema: RUN_SCHEMA.to_string(),
            config_hash: config.hash(),
            config: config.clone(),
        }
    }
}
