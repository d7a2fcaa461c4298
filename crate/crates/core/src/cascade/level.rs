use super::{CascadeError, CutoffState};
use crate::heat::{EnergyLedger, HeatStepPlan};
use crate::noise::NoiseCoefficient;
use crate::spectral::{PhysicalField, SpectralField, Transformer};

/// The partial sum `u^{(k-1)}` a level is driven by, in both representations.
#[derive(Clone, Debug)]
pub struct LowerSum {
    pub spectral: SpectralField,
    pub physical: PhysicalField,
}

impl LowerSum {
    pub fn zero(transformer: &Transformer) -> Self {
        let lat = transformer.lattice();
        Self {
            spectral: SpectralField::zeros(lat),
            physical: PhysicalField::zeros(lat.len()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.spectral.is_zero()
    }

    /// `self += v` in both representations.
    pub fn accumulate(&mut self, v: &SpectralField, v_phys: &PhysicalField) {
        self.spectral.axpy(1.0, v);
        self.physical.axpy(1.0, v_phys);
    }
}

/// State of `v^{(k)}` with its cutoff functionals and energy ledgers.
#[derive(Clone, Debug)]
pub struct CascadeLevel {
    pub k: usize,
    pub v: SpectralField,
    pub cutoff: CutoffState,
    /// Ledgers at `α = 0` and `α = δ`.
    pub ledgers: [EnergyLedger; 2],
    time: f64,
    /// Squared norms of `v` at the cutoff exponents, from the last observation.
    norms: [f64; 4],
}

impl CascadeLevel {
    pub fn new(k: usize, v0: SpectralField, delta: f64, m_threshold: f64, eps_bar: f64) -> Self {
        let eps_threshold = eps_bar / 2f64.powi(k as i32);
        let cutoff = CutoffState::new(delta, m_threshold, eps_threshold);
        let mut level = Self {
            k,
            v: v0,
            cutoff,
            ledgers: [EnergyLedger::new(0.0), EnergyLedger::new(delta)],
            time: 0.0,
            norms: [0.0; 4],
        };
        level.observe();
        level.record_ledgers();
        level
    }

    /// Feeds the norms of the current state to the cutoff functionals.
    fn observe(&mut self) {
        self.norms = self.v.sobolev_norms_sq(self.cutoff.norm_exponents());
        let [e0, e_delta, r0, r_delta] = self.norms;
        self.cutoff.observe_values(self.time, e0.sqrt(), e_delta.sqrt(), r0, r_delta);
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Refreshes the energy ledgers at the current time.
    pub fn record_ledgers(&mut self) {
        let t = self.time;
        let [e0, e_delta, r0, r_delta] = self.norms;
        self.ledgers[0].record(t, e0, r0, 0.0, 0.0);
        self.ledgers[1].record(t, e_delta, r_delta, 0.0, 0.0);
    }
}

/// Symmetric flux `v⊗v + ζ (w⊗v + v⊗w)` in upper-triangular order.
pub(crate) fn level_flux(v: &PhysicalField, w: &PhysicalField, zeta: f64, include_w: bool) -> [Vec<f64>; 6] {
    const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    std::array::from_fn(|p| {
        let (m, j) = PAIRS[p];
        let (vm, vj) = (&v.comps[m], &v.comps[j]);
        if include_w && zeta != 0.0 {
            let (wm, wj) = (&w.comps[m], &w.comps[j]);
            (0..vm.len())
                .map(|x| vm[x] * vj[x] + zeta * (wm[x] * vj[x] + vm[x] * wj[x]))
                .collect()
        } else {
            vm.iter().zip(vj).map(|(a, b)| a * b).collect()
        }
    })
}

/// Advances one level by one step of the cutoff difference system:
///
/// `dv = [Δv - (ψφ)² P∇·(v⊗v + ζ u⊗v + ζ v⊗u)] dt + (ψφ)² ζ (σ(t, v+u) - σ(t, u)) dW`
///
/// with `u = u^{(k-1)}`, cutoffs taken at the start of the step, then updates
/// the cutoff functionals from the new state. `v_phys` must be the physical
/// form of `level.v` (pass `None` to have it computed).
#[allow(clippy::too_many_arguments)]
pub fn step_level(
    level: &mut CascadeLevel,
    lower: &LowerSum,
    noise: &NoiseCoefficient,
    plan: &HeatStepPlan,
    dw: &[f64],
    transformer: &mut Transformer,
    v_phys: Option<&PhysicalField>,
) -> Result<(), CascadeError> {
    let t = level.time;
    let dt = plan.dt();
    if level.v.is_zero() {
        // zero is invariant: no flux, and σ(t, 0 + u) - σ(t, u) = 0
        level.time = t + dt;
        level.observe();
        return Ok(());
    }
    let weight = level.cutoff.nonlinear_weight();
    let zeta = level.cutoff.zeta;
    let forcing = if weight > 0.0 {
        let owned;
        let vp = match v_phys {
            Some(p) => p,
            None => {
                owned = transformer.to_physical(&level.v);
                &owned
            }
        };
        let flux = level_flux(vp, &lower.physical, zeta, !lower.is_zero());
        Some(transformer.projected_divergence_sym(&flux).scaled(-weight))
    } else {
        None
    };
    let increment = if weight > 0.0 && zeta > 0.0 && !noise.is_zero() {
        Some(noise.increment_above(t, &lower.spectral, &level.v, dw).scaled(weight * zeta))
    } else {
        None
    };
    let next = plan.advance(&level.v, forcing.as_ref(), increment.as_ref());
    level.v = next;
    level.time = t + dt;
    level.observe();
    if !level.norms[0].is_finite() {
        return Err(CascadeError::NonFinite { level: level.k, time: t + dt });
    }
    Ok(())
}

/// Cutoff products `ζ_{k-1} = Π_{i<k} ψ_i` for levels in order.
pub fn update_zetas(levels: &mut [CascadeLevel]) {
    let mut prod = 1.0;
    for level in levels.iter_mut() {
        level.cutoff.zeta = prod;
        prod *= level.cutoff.psi;
    }
}

pub(crate) fn shared_lattice_check(levels: &[CascadeLevel]) -> Result<(), CascadeError> {
    if let Some(first) = levels.first() {
        for l in &levels[1..] {
            first.v.check_lattice(&l.v)?;
        }
    }
    Ok(())
}

