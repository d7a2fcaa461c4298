use serde::{Deserialize, Serialize};

use super::level::level_flux;
use super::{CascadeError, CutoffState};
use crate::heat::HeatStepPlan;
use crate::noise::NoiseCoefficient;
use crate::spectral::{PhysicalField, SpectralField, Transformer};

/// Inputs for a Picard solve of one level over a short window.
#[derive(Clone, Debug)]
pub struct PicardWindow {
    pub start_time: f64,
    /// `v` at the window start.
    pub v0: SpectralField,
    /// Cutoff functionals at the window start (integrals carried in).
    pub cutoff: CutoffState,
    /// `u^{(k-1)}` at the left end of every step.
    pub lower: Vec<SpectralField>,
    /// `ζ_{k-1}` at the left end of every step.
    pub zeta: Vec<f64>,
    /// Brownian increments per step, reused by every iterate.
    pub increments: Vec<Vec<f64>>,
}

impl PicardWindow {
    pub fn steps(&self) -> usize {
        self.increments.len()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractionReport {
    pub iterations: usize,
    pub converged: bool,
    /// `‖V^{(m)}‖_{C_T H^{1/2+δ}} + ‖V^{(m)}‖_{L²_T H^{3/2+δ}}` for `m = 1, 2, ...`.
    pub differences: Vec<f64>,
    /// `differences[m] / differences[m-1]`.
    pub ratios: Vec<f64>,
    /// Largest ratio whose denominator is above the roundoff floor.
    pub max_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct PicardOutcome {
    /// Limit iterate at every grid time of the window (`steps + 1` entries).
    pub trajectory: Vec<SpectralField>,
    pub report: ContractionReport,
}

/// Window norm `sup_t ‖V‖_{H^{1/2+δ}} + (∫ ‖V‖²_{H^{3/2+δ}})^{1/2}` (trapezoidal).
pub fn window_norm(diffs: &[SpectralField], dt: f64, delta: f64) -> f64 {
    let sup = diffs.iter().map(|d| d.sobolev_norm(0.5 + delta)).fold(0.0, f64::max);
    let rates: Vec<f64> = diffs.iter().map(|d| d.sobolev_norm_sq(1.5 + delta)).collect();
    let integral: f64 = rates.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum();
    sup + integral.sqrt()
}

/// Cutoff values `(ψ, φ)` along a trajectory, continuing the window's accumulators.
fn cutoff_path(traj: &[SpectralField], start: &CutoffState, t0: f64, dt: f64) -> Vec<(f64, f64)> {
    let mut c = start.clone();
    let mut out = Vec::with_capacity(traj.len());
    out.push((c.psi, c.phi));
    for (j, v) in traj.iter().enumerate().skip(1) {
        c.observe(t0 + j as f64 * dt, v);
        out.push((c.psi, c.phi));
    }
    out
}

/// Picard iteration of the cutoff difference system in mild form.
///
/// `v^{(0)}` is the homogeneous heat flow from `v0`. Iterate `m` solves the heat
/// equation forced by `v^{(m-1)}`, with coefficient `ψ^{(m)}ψ^{(m-1)}φ^{(m)}φ^{(m-1)}`;
/// `ψ^{(m)}, φ^{(m)}` are evaluated causally along the iterate being built.
/// Forcing is integrated exactly against the semigroup over each step.
pub fn picard_solve(
    window: &PicardWindow,
    noise: &NoiseCoefficient,
    plan: &HeatStepPlan,
    transformer: &mut Transformer,
    max_iterations: usize,
    tol: f64,
) -> Result<PicardOutcome, CascadeError> {
    let steps = window.steps();
    if window.lower.len() < steps || window.zeta.len() < steps {
        return Err(CascadeError::InvalidParameter(format!(
            "window has {steps} increments but {} lower states and {} cutoff products",
            window.lower.len(),
            window.zeta.len()
        )));
    }
    let dt = plan.dt();
    let delta = window.cutoff.delta;
    let t0 = window.start_time;

    let mut prev: Vec<SpectralField> = Vec::with_capacity(steps + 1);
    prev.push(window.v0.clone());
    for j in 0..steps {
        let next = plan.advance_mild(&prev[j], None, None);
        prev.push(next);
    }
    let mut prev_cut = cutoff_path(&prev, &window.cutoff, t0, dt);
    let lower_phys: Vec<PhysicalField> = window.lower.iter().map(|w| transformer.to_physical(w)).collect();

    let scale = window_norm(&prev, dt, delta).max(f64::MIN_POSITIVE);
    let floor = 1e-13 * scale;
    let mut differences = Vec::new();
    let mut ratios = Vec::new();
    let mut max_ratio: f64 = 0.0;
    let mut above_one = 0usize;
    let mut converged = false;

    for _m in 1..=max_iterations {
        // forcing and noise driven by the previous iterate
        let mut forcing = Vec::with_capacity(steps);
        let mut noise_inc = Vec::with_capacity(steps);
        for j in 0..steps {
            let v = &prev[j];
            let w = &window.lower[j];
            let zeta = window.zeta[j];
            if v.is_zero() {
                forcing.push(None);
                noise_inc.push(None);
                continue;
            }
            let vp = transformer.to_physical(v);
            let flux = level_flux(&vp, &lower_phys[j], zeta, !w.is_zero());
            forcing.push(Some(transformer.projected_divergence_sym(&flux).scaled(-1.0)));
            if zeta > 0.0 && !noise.is_zero() {
                noise_inc.push(Some(noise.increment_above(t0 + j as f64 * dt, w, v, &window.increments[j]).scaled(zeta)));
            } else {
                noise_inc.push(None);
            }
        }
        let mut cur: Vec<SpectralField> = Vec::with_capacity(steps + 1);
        cur.push(window.v0.clone());
        let mut c = window.cutoff.clone();
        let mut cur_cut = Vec::with_capacity(steps + 1);
        cur_cut.push((c.psi, c.phi));
        for j in 0..steps {
            let (psi_m, phi_m) = cur_cut[j];
            let (psi_p, phi_p) = prev_cut[j];
            let coef = psi_m * psi_p * phi_m * phi_p;
            let f = forcing[j].as_ref().map(|f| f.scaled(coef));
            let g = noise_inc[j].as_ref().map(|g| g.scaled(coef));
            let next = plan.advance_mild(&cur[j], f.as_ref(), g.as_ref());
            if !next.sobolev_norm(0.5).is_finite() {
                return Err(CascadeError::NonFinite { level: usize::MAX, time: t0 + (j + 1) as f64 * dt });
            }
            c.observe(t0 + (j + 1) as f64 * dt, &next);
            cur_cut.push((c.psi, c.phi));
            cur.push(next);
        }
        let diffs: Vec<SpectralField> = cur.iter().zip(&prev).map(|(a, b)| a.sub(b)).collect();
        let d = window_norm(&diffs, dt, delta);
        if let Some(&last) = differences.last() {
            let r: f64 = if last > 0.0 { d / last } else { 0.0 };
            ratios.push(r);
            if last > floor {
                max_ratio = max_ratio.max(r);
                above_one = if r >= 1.0 { above_one + 1 } else { 0 };
                if above_one >= 3 {
                    return Err(CascadeError::NonContraction { ratios });
                }
            }
        }
        differences.push(d);
        prev = cur;
        prev_cut = cur_cut;
        if d <= tol * scale {
            converged = true;
            break;
        }
    }
    Ok(PicardOutcome {
        trajectory: prev,
        report: ContractionReport {
            iterations: differences.len(),
            converged,
            differences,
            ratios,
            max_ratio,
        },
    })
}
