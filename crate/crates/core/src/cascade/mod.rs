//! Dyadic decomposition of the data and the lockstep cascade of cutoff
//! difference systems whose partial sums build the solution.

mod cutoff;
mod decompose;
mod level;
mod picard;
mod reassemble;
mod residual;


use std::sync::Arc;

use thiserror::Error;

pub use cutoff::{theta, CutoffState};
pub use decompose::{decompose, DataDecomposition, Shell};
pub use level::{step_level, update_zetas, CascadeLevel, LowerSum};
pub use picard::{picard_solve, window_norm, ContractionReport, PicardOutcome, PicardWindow};
pub use reassemble::{reassemble, NonlinearityIdentityReport};
pub use residual::{nonlinearity, weak_residual, ResidualAccumulator, ResidualReport};

use crate::heat::{HeatError, HeatStepPlan};
use crate::noise::NoiseCoefficient;
use crate::spectral::{SpectralError, SpectralField, Transformer};

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("data norm {norm} exceeds eps0 = {eps0}")]
    DataTooLarge { norm: f64, eps0: f64 },
    #[error("piece {level} has H^1/2 norm {norm} above its bound {bound}")]
    DecompositionBound { level: usize, norm: f64, bound: f64 },
    #[error("non-finite state on level {level} at t = {time}")]
    NonFinite { level: usize, time: f64 },
    #[error("Picard iteration is not contracting: ratios {ratios:?}")]
    NonContraction { ratios: Vec<f64> },
    #[error("path record carries {got} Brownian increments, {needed} needed")]
    MissingIncrements { got: usize, needed: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Heat(#[from] HeatError),
}

/// `M_k = factor · max_{j<=k} 𝕄_j`, falling back to `factor · ε₀` while the
/// running maximum is zero (a zero level never moves, but a zero threshold
/// would stop it at `t = 0`).
pub fn level_thresholds(decomposition: &DataDecomposition, factor: f64) -> Vec<f64> {
    let mut running: f64 = 0.0;
    decomposition
        .data_bounds
        .iter()
        .map(|&m| {
            running = running.max(m);
            if running > 0.0 {
                factor * running
            } else {
                factor * decomposition.eps0
            }
        })
        .collect()
}

/// All levels of one path, advanced in lockstep on a shared grid.
pub struct Cascade {
    levels: Vec<CascadeLevel>,
    plan: HeatStepPlan,
    noise: Arc<NoiseCoefficient>,
    transformer: Transformer,
    time: f64,
    steps: usize,
}

impl Cascade {
    pub fn new(
        decomposition: &DataDecomposition,
        m_thresholds: &[f64],
        eps_bar: f64,
        plan: HeatStepPlan,
        noise: Arc<NoiseCoefficient>,
    ) -> Result<Self, CascadeError> {
        if m_thresholds.len() != decomposition.levels() {
            return Err(CascadeError::InvalidParameter(format!(
                "{} thresholds for {} levels",
                m_thresholds.len(),
                decomposition.levels()
            )));
        }
        if !(eps_bar > 0.0) {
            return Err(CascadeError::InvalidParameter(format!("eps_bar must be positive, got {eps_bar}")));
        }
        let lattice = decomposition.pieces[0].lattice().clone();
        if **noise.lattice() != *lattice {
            return Err(SpectralError::LatticeMismatch {
                left: lattice.resolution(),
                right: noise.lattice().resolution(),
            }
            .into());
        }
        let mut levels: Vec<CascadeLevel> = decomposition
            .pieces
            .iter()
            .zip(m_thresholds)
            .enumerate()
            .map(|(k, (p, &m))| CascadeLevel::new(k, p.clone(), decomposition.delta, m, eps_bar))
            .collect();
        level::shared_lattice_check(&levels)?;
        update_zetas(&mut levels);
        Ok(Self {
            levels,
            plan,
            noise,
            transformer: Transformer::new(&lattice),
            time: 0.0,
            steps: 0,
        })
    }

    pub fn levels(&self) -> &[CascadeLevel] {
        &self.levels
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn plan(&self) -> &HeatStepPlan {
        &self.plan
    }

    pub fn noise(&self) -> &NoiseCoefficient {
        &self.noise
    }

    pub fn transformer(&mut self) -> &mut Transformer {
        &mut self.transformer
    }

    /// `u^(k) = v^(0) + ... + v^(k)` for every `k`.
    pub fn partial_sums(&self) -> Vec<SpectralField> {
        let mut acc = SpectralField::zeros(self.levels[0].v.lattice());
        self.levels
            .iter()
            .map(|l| {
                acc.axpy(1.0, &l.v);
                acc.clone()
            })
            .collect()
    }

    pub fn total(&self) -> SpectralField {
        self.partial_sums().pop().expect("at least one level")
    }

    /// Advances every level by one step driven by `dw` and returns the full sum
    /// `u^(k_max)` as it was at the start of the step.
    pub fn step(&mut self, dw: &[f64]) -> Result<LowerSum, CascadeError> {
        update_zetas(&mut self.levels);
        let mut lower = LowerSum::zero(&self.transformer);
        for level in self.levels.iter_mut() {
            if level.v.is_zero() {
                step_level(level, &lower, &self.noise, &self.plan, dw, &mut self.transformer, None)?;
            } else {
                let old = level.v.clone();
                let phys = self.transformer.to_physical(&old);
                step_level(level, &lower, &self.noise, &self.plan, dw, &mut self.transformer, Some(&phys))?;
                lower.accumulate(&old, &phys);
            }
            level.record_ledgers();
        }
        self.steps += 1;
        self.time = self.steps as f64 * self.plan.dt();
        update_zetas(&mut self.levels);
        Ok(lower)
    }
}
