use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::level::level_flux;
use super::CascadeError;
use crate::noise::NoiseCoefficient;
use crate::spectral::{PhysicalField, SpectralError, SpectralField, Transformer};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub test_modes: Vec<[i32; 3]>,
    pub steps: usize,
    /// Time up to which the defect was accumulated.
    pub time: f64,
    /// `max_{t, n, j} |defect_j(t, n)|`.
    pub max_defect: f64,
    /// Max defect per test mode.
    pub per_mode: Vec<f64>,
}

/// `P∇·(u⊗u)` from a field already in physical space.
pub fn nonlinearity(u_phys: &PhysicalField, transformer: &mut Transformer) -> SpectralField {
    let flux = level_flux(u_phys, u_phys, 0.0, false);
    transformer.projected_divergence_sym(&flux)
}

/// Discrete defect of the weak formulation against Fourier test modes:
///
/// `û(t_m) - û(0) + Σ_{j<m} Δt (|n|² û(t_j) + N̂(t_j)) - Σ_{j<m} σ̂(t_j, u(t_j)) ΔW_j`
///
/// with left-point quadrature in time and the recorded increments in the
/// stochastic sum.
#[derive(Clone, Debug)]
pub struct ResidualAccumulator {
    modes: Vec<[i32; 3]>,
    index: Vec<usize>,
    k2: Vec<f64>,
    initial: Vec<[Complex64; 3]>,
    quadrature: Vec<[Complex64; 3]>,
    per_mode: Vec<f64>,
    steps: usize,
    time: f64,
}

impl ResidualAccumulator {
    pub fn new(u0: &SpectralField, test_modes: &[[i32; 3]]) -> Result<Self, CascadeError> {
        let lat = u0.lattice();
        let mut index = Vec::with_capacity(test_modes.len());
        let mut k2 = Vec::with_capacity(test_modes.len());
        for &n in test_modes {
            let idx = lat.index_of(n).ok_or(SpectralError::ModeOutOfRange(n))?;
            index.push(idx);
            k2.push(lat.k2()[idx]);
        }
        let initial = index.iter().map(|&i| coeffs(u0, i)).collect();
        let zero = [Complex64::new(0.0, 0.0); 3];
        Ok(Self {
            modes: test_modes.to_vec(),
            index,
            k2,
            initial,
            quadrature: vec![zero; test_modes.len()],
            per_mode: vec![0.0; test_modes.len()],
            steps: 0,
            time: 0.0,
        })
    }

    /// Adds the quadrature of one step from the state at its left end.
    pub fn accumulate(
        &mut self,
        dt: f64,
        u_left: &SpectralField,
        nonlinear_left: Option<&SpectralField>,
        noise_increment: Option<&SpectralField>,
    ) {
        for (m, &i) in self.index.iter().enumerate() {
            let u = coeffs(u_left, i);
            let nl = nonlinear_left.map(|f| coeffs(f, i));
            let g = noise_increment.map(|f| coeffs(f, i));
            for j in 0..3 {
                let mut q = dt * self.k2[m] * u[j];
                if let Some(nl) = nl {
                    q += dt * nl[j];
                }
                if let Some(g) = g {
                    q -= g[j];
                }
                self.quadrature[m][j] += q;
            }
        }
        self.steps += 1;
        self.time += dt;
    }

    /// Evaluates the defect with the state at the right end of the last step.
    pub fn observe(&mut self, u_right: &SpectralField) {
        for (m, &i) in self.index.iter().enumerate() {
            let u = coeffs(u_right, i);
            let d = (0..3)
                .map(|j| (u[j] - self.initial[m][j] + self.quadrature[m][j]).norm())
                .fold(0.0, f64::max);
            self.per_mode[m] = self.per_mode[m].max(d);
        }
    }

    pub fn report(&self) -> ResidualReport {
        ResidualReport {
            test_modes: self.modes.clone(),
            steps: self.steps,
            time: self.time,
            max_defect: self.per_mode.iter().cloned().fold(0.0, f64::max),
            per_mode: self.per_mode.clone(),
        }
    }
}

fn coeffs(u: &SpectralField, idx: usize) -> [Complex64; 3] {
    [u.component(0)[idx], u.component(1)[idx], u.component(2)[idx]]
}

/// Weak-form defect of a stored trajectory on a uniform grid.
///
/// `increments[j]` drives the step from `trajectory[j]` to `trajectory[j+1]`;
/// set `nonlinear = false` to test against the heat equation instead.
pub fn weak_residual(
    trajectory: &[SpectralField],
    increments: &[Vec<f64>],
    dt: f64,
    noise: &NoiseCoefficient,
    test_modes: &[[i32; 3]],
    transformer: &mut Transformer,
    nonlinear: bool,
) -> Result<ResidualReport, CascadeError> {
    let Some(u0) = trajectory.first() else {
        return Err(CascadeError::InvalidParameter("empty trajectory".into()));
    };
    let needed = trajectory.len() - 1;
    if !noise.is_zero() && increments.len() < needed {
        return Err(CascadeError::MissingIncrements {
            got: increments.len(),
            needed,
        });
    }
    let zero = SpectralField::zeros(u0.lattice());
    let mut acc = ResidualAccumulator::new(u0, test_modes)?;
    for j in 0..needed {
        let u = &trajectory[j];
        let nl = if nonlinear && !u.is_zero() {
            let up = transformer.to_physical(u);
            Some(nonlinearity(&up, transformer))
        } else {
            None
        };
        let g = if noise.is_zero() {
            None
        } else {
            Some(noise.difference_increment(j as f64 * dt, u, &zero, &increments[j]))
        };
        acc.accumulate(dt, u, nl.as_ref(), g.as_ref());
        acc.observe(&trajectory[j + 1]);
    }
    Ok(acc.report())
}
