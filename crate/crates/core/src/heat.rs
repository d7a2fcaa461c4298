//! Stochastic heat equation `du = (Δu + f) dt + g dW` in Fourier space.
//!
//! The default scheme is exponential Euler: the heat semigroup is applied
//! exactly per mode after adding the forcing and the Itô increment,
//! `û ← e^{-|n|²Δt} (û + Δt f̂ + Σ_k ĝ_k ΔW_k)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::{hs_norm, NoiseError, WienerBasis};
use crate::spectral::{SpectralError, SpectralField};

#[derive(Debug, Error)]
pub enum HeatError {
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("non-finite state at step {step} (t = {time}); last finite H^1/2 norm {last_norm:.3e}, stiffness Δt·(N/2)² = {stiffness:.3}")]
    NonFinite {
        step: usize,
        time: f64,
        last_norm: f64,
        stiffness: f64,
    },
    #[error("estimate needs at least {min} paths, got {got}")]
    TooFewPaths { min: usize, got: usize },
    #[error("horizon ensembles have different path counts ({0} vs {1})")]
    EnsembleMismatch(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatScheme {
    ExponentialEuler,
    SemiImplicitEuler,
}

/// Per-mode step factors for a fixed `Δt`.
#[derive(Clone, Debug)]
pub struct HeatStepPlan {
    dt: f64,
    horizon: f64,
    scheme: HeatScheme,
    /// `e^{-|n|²Δt}` (or `1/(1+|n|²Δt)` for the semi-implicit scheme).
    decay: Vec<f64>,
    /// `∫₀^Δt e^{-|n|²s} ds`, the exact weight for forcing frozen over a step.
    duhamel: Vec<f64>,
    stiffness: f64,
}

impl HeatStepPlan {
    pub fn new(k2: &[f64], resolution: usize, dt: f64, horizon: f64, scheme: HeatScheme) -> Result<Self, HeatError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(HeatError::InvalidStep(dt));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(HeatError::InvalidHorizon(horizon));
        }
        let decay = k2
            .iter()
            .map(|&k| match scheme {
                HeatScheme::ExponentialEuler => (-k * dt).exp(),
                HeatScheme::SemiImplicitEuler => 1.0 / (1.0 + k * dt),
            })
            .collect();
        let duhamel = k2
            .iter()
            .map(|&k| if k == 0.0 { dt } else { -(-k * dt).exp_m1() / k })
            .collect();
        let half = resolution as f64 / 2.0;
        Ok(Self {
            dt,
            horizon,
            scheme,
            decay,
            duhamel,
            stiffness: dt * half * half,
        })
    }

    pub fn for_lattice(
        lattice: &crate::spectral::ModeLattice,
        dt: f64,
        horizon: f64,
        scheme: HeatScheme,
    ) -> Result<Self, HeatError> {
        Self::new(lattice.k2(), lattice.resolution(), dt, horizon, scheme)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn scheme(&self) -> HeatScheme {
        self.scheme
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    /// `Δt·(N/2)²`, the largest `|n|²Δt` on the lattice.
    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    /// One step given the pre-summed stochastic increment `Σ_k ĝ_k ΔW_k`.
    pub fn advance(&self, u: &SpectralField, f: Option<&SpectralField>, increment: Option<&SpectralField>) -> SpectralField {
        let mut out = u.clone();
        if let Some(f) = f {
            out.axpy(self.dt, f);
        }
        if let Some(g) = increment {
            out.axpy(1.0, g);
        }
        out.apply_multiplier(&self.decay)
    }

    /// Mild-form step: `e^{-|n|²Δt}(û + ΔW-term) + (∫₀^Δt e^{-|n|²s} ds) f̂`.
    pub fn advance_mild(&self, u: &SpectralField, f: Option<&SpectralField>, increment: Option<&SpectralField>) -> SpectralField {
        let mut out = u.clone();
        if let Some(g) = increment {
            out.axpy(1.0, g);
        }
        let mut out = out.apply_multiplier(&self.decay);
        if let Some(f) = f {
            out.axpy(1.0, &f.apply_multiplier(&self.duhamel));
        }
        out
    }
}

/// `heat_step` with explicit noise columns and Brownian increments.
pub fn heat_step(
    u: &SpectralField,
    f: &SpectralField,
    g: &[SpectralField],
    dw: &[f64],
    plan: &HeatStepPlan,
) -> Result<SpectralField, HeatError> {
    u.check_lattice(f)?;
    let mut inc = SpectralField::zeros(u.lattice());
    for (col, d) in g.iter().zip(dw) {
        u.check_lattice(col)?;
        inc.axpy(*d, col);
    }
    Ok(plan.advance(u, Some(f), Some(&inc)))
}

/// Running integrals entering the heat energy estimate at regularity `alpha`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub alpha: f64,
    pub time: f64,
    /// `‖u(0)‖²_{H^{1/2+α}}`.
    pub initial: f64,
    /// `sup_{s<=t} ‖u(s)‖²_{H^{1/2+α}}` over grid times.
    pub sup_energy: f64,
    /// `∫₀ᵗ ‖u‖²_{H^{3/2+α}}`, trapezoidal.
    pub dissipation: f64,
    /// `∫₀ᵗ ‖f‖²_{H^{α-1/2}}`, trapezoidal.
    pub forcing: f64,
    /// `∫₀ᵗ ‖g‖²_{ℍ^{1/2+α}}`, trapezoidal.
    pub noise: f64,
    /// Rates at the previous grid time, kept so a restored ledger can continue.
    #[serde(default)]
    last: Option<[f64; 3]>,
}

impl EnergyLedger {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }

    /// Records the integrands at grid time `t`; the first call fixes the initial value.
    pub fn record(&mut self, t: f64, energy: f64, dissipation_rate: f64, forcing_rate: f64, noise_rate: f64) {
        match self.last {
            None => {
                self.initial = energy;
                self.sup_energy = energy;
            }
            Some([d, f, g]) => {
                let h = t - self.time;
                self.dissipation += 0.5 * h * (d + dissipation_rate);
                self.forcing += 0.5 * h * (f + forcing_rate);
                self.noise += 0.5 * h * (g + noise_rate);
                self.sup_energy = self.sup_energy.max(energy);
            }
        }
        self.time = t;
        self.last = Some([dissipation_rate, forcing_rate, noise_rate]);
    }

    /// Records the state `u` with forcing `f` and noise columns `g`.
    pub fn record_state(&mut self, t: f64, u: &SpectralField, f: Option<&SpectralField>, g_hs_sq: f64) {
        let a = self.alpha;
        let f_rate = f.map_or(0.0, |f| f.sobolev_norm_sq(a - 0.5));
        self.record(t, u.sobolev_norm_sq(0.5 + a), u.sobolev_norm_sq(1.5 + a), f_rate, g_hs_sq);
    }

    /// `sup ‖u‖² - ‖u₀‖² + ∫‖u‖²_{H^{3/2+α}}`.
    pub fn lhs(&self) -> f64 {
        self.sup_energy - self.initial + self.dissipation
    }

    /// `∫‖f‖² + ∫‖g‖²`.
    pub fn rhs(&self) -> f64 {
        self.forcing + self.noise
    }
}

/// One JSONL line of a heat trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatRecord {
    pub t: f64,
    pub h_half: f64,
    pub h_half_delta: f64,
    pub h_three_halves: f64,
    pub ledger: EnergyLedger,
}

#[derive(Clone, Copy, Debug)]
pub struct HeatOptions {
    pub alpha: f64,
    pub delta: f64,
    /// Emit a record every `save_stride` steps (0 disables emission).
    pub save_stride: usize,
    pub keep_fields: bool,
}

impl Default for HeatOptions {
    fn default() -> Self {
        Self { alpha: 0.0, delta: 0.25, save_stride: 0, keep_fields: false }
    }
}

#[derive(Clone, Debug)]
pub struct HeatRun {
    pub records: Vec<HeatRecord>,
    pub fields: Vec<(f64, SpectralField)>,
    pub ledger: EnergyLedger,
    pub final_state: SpectralField,
}

impl HeatRun {
    /// Ledger snapshot at the emitted record closest to `t`.
    pub fn ledger_at(&self, t: f64) -> Option<&EnergyLedger> {
        self.records
            .iter()
            .min_by(|a, b| (a.t - t).abs().partial_cmp(&(b.t - t).abs()).expect("finite times"))
            .map(|r| &r.ledger)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Integrates the stochastic heat equation over the plan's horizon.
///
/// `forcing(t, u)` and `noise(t, u)` are evaluated at the left end of each step.
pub fn solve_heat<F, G>(
    u0: &SpectralField,
    mut forcing: F,
    mut noise: G,
    plan: &HeatStepPlan,
    basis: &mut WienerBasis,
    options: HeatOptions,
) -> Result<HeatRun, HeatError>
where
    F: FnMut(f64, &SpectralField) -> Option<SpectralField>,
    G: FnMut(f64, &SpectralField) -> Vec<SpectralField>,
{
    let steps = plan.steps();
    let dt = plan.dt();
    let mut ledger = EnergyLedger::new(options.alpha);
    let mut records = Vec::new();
    let mut fields = Vec::new();
    let mut u = u0.clone();
    let mut last_norm = u.sobolev_norm(0.5);
    let emit = |step: usize, t: f64, u: &SpectralField, ledger: &EnergyLedger, records: &mut Vec<HeatRecord>, fields: &mut Vec<(f64, SpectralField)>| {
        if options.save_stride > 0 && (step % options.save_stride == 0 || step == steps) {
            records.push(HeatRecord {
                t,
                h_half: u.sobolev_norm(0.5),
                h_half_delta: u.sobolev_norm(0.5 + options.delta),
                h_three_halves: u.sobolev_norm(1.5),
                ledger: ledger.clone(),
            });
            if options.keep_fields {
                fields.push((t, u.clone()));
            }
        }
    };
    for step in 0..=steps {
        let t = step as f64 * dt;
        let f = forcing(t, &u);
        let g = noise(t, &u);
        ledger.record_state(t, &u, f.as_ref(), hs_norm(&g, 0.5 + options.alpha).powi(2));
        emit(step, t, &u, &ledger, &mut records, &mut fields);
        if step == steps {
            break;
        }
        let dw = basis.sample_increment(dt)?;
        let mut inc = SpectralField::zeros(u.lattice());
        for (col, d) in g.iter().zip(&dw) {
            inc.axpy(*d, col);
        }
        let next = plan.advance(&u, f.as_ref(), Some(&inc));
        let norm = next.sobolev_norm(0.5);
        if !norm.is_finite() {
            return Err(HeatError::NonFinite {
                step: step + 1,
                time: t + dt,
                last_norm,
                stiffness: plan.stiffness(),
            });
        }
        last_norm = norm;
        u = next;
    }
    Ok(HeatRun { records, fields, ledger, final_state: u })
}

/// Ensemble ratio `E[LHS] / E[RHS]` with a delta-method confidence interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub paths: usize,
    pub lhs_mean: f64,
    pub rhs_mean: f64,
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RatioEstimate {
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let m = pairs.len() as f64;
        let lhs_mean = pairs.iter().map(|p| p.0).sum::<f64>() / m;
        let rhs_mean = pairs.iter().map(|p| p.1).sum::<f64>() / m;
        if rhs_mean == 0.0 {
            let ratio = if lhs_mean == 0.0 { 0.0 } else { f64::INFINITY };
            return Self { paths: pairs.len(), lhs_mean, rhs_mean, ratio, ci_low: ratio, ci_high: ratio };
        }
        let ratio = lhs_mean / rhs_mean;
        let resid_var = if pairs.len() > 1 {
            pairs.iter().map(|(l, r)| (l - ratio * r).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        let se = (resid_var / m).sqrt() / rhs_mean.abs();
        Self {
            paths: pairs.len(),
            lhs_mean,
            rhs_mean,
            ratio,
            ci_low: ratio - 1.96 * se,
            ci_high: ratio + 1.96 * se,
        }
    }
}

/// Fitted constant of the heat energy estimate at two horizons.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub alpha: f64,
    pub horizon: RatioEstimate,
    pub double_horizon: RatioEstimate,
    /// `|C(2T) - C(T)| / C(T)`.
    pub relative_change: f64,
    pub constant_bound: f64,
    /// Either fitted constant exceeds `constant_bound`.
    pub violation: bool,
    /// Zero right side with a nonzero left side on some horizon.
    pub inconsistent: bool,
}

pub const MIN_ESTIMATE_PATHS: usize = 100;

/// Compares the ensemble ratio `E[LHS]/E[RHS]` at horizons `T` and `2T`.
pub fn verify_energy_estimate(
    at_horizon: &[EnergyLedger],
    at_double: &[EnergyLedger],
    constant_bound: f64,
) -> Result<EstimateReport, HeatError> {
    if at_horizon.len() != at_double.len() {
        return Err(HeatError::EnsembleMismatch(at_horizon.len(), at_double.len()));
    }
    if at_horizon.len() < MIN_ESTIMATE_PATHS {
        return Err(HeatError::TooFewPaths { min: MIN_ESTIMATE_PATHS, got: at_horizon.len() });
    }
    let pairs = |ls: &[EnergyLedger]| ls.iter().map(|l| (l.lhs(), l.rhs())).collect::<Vec<_>>();
    let a = RatioEstimate::from_pairs(&pairs(at_horizon));
    let b = RatioEstimate::from_pairs(&pairs(at_double));
    let inconsistent = a.ratio.is_infinite() || b.ratio.is_infinite();
    let relative_change = if a.ratio == 0.0 {
        if b.ratio == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (b.ratio - a.ratio).abs() / a.ratio
    };
    Ok(EstimateReport {
        alpha: at_horizon[0].alpha,
        violation: a.ratio > constant_bound || b.ratio > constant_bound,
        horizon: a,
        double_horizon: b,
        relative_change,
        constant_bound,
        inconsistent,
    })
}
