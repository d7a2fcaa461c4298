//! Truncated cylindrical Wiener process and multiplicative noise coefficients.
//!
//! The Wiener process keeps `K` independent Brownian coordinates. A noise
//! coefficient `σ(t, u)` maps a state to `K` solenoidal, mean-free columns;
//! the stochastic forcing over one step is `Σ_k σ(t,u) e_k ΔW_k`.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{ModeLattice, SpectralField};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("at least {min} paths are required, got {got}")]
    TooFewPaths { min: usize, got: usize },
    #[error("noise scale must be finite and non-negative, got {0}")]
    InvalidScale(f64),
    #[error("need at least one Wiener direction")]
    NoDirections,
}

/// `K` independent Brownian motions driven by a seeded ChaCha stream.
#[derive(Clone, Debug)]
pub struct WienerBasis {
    seed: u64,
    rng: ChaCha8Rng,
    time: f64,
    values: Vec<f64>,
}

impl WienerBasis {
    pub fn new(directions: usize, seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            time: 0.0,
            values: vec![0.0; directions],
        }
    }

    pub fn directions(&self) -> usize {
        self.values.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Accumulated `W_k(t)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Draws `ΔW_k ~ N(0, dt)` for every direction and advances the clock.
    pub fn sample_increment(&mut self, dt: f64) -> Result<Vec<f64>, NoiseError> {
        if !(dt > 0.0) {
            return Err(NoiseError::NonPositiveStep(dt));
        }
        let scale = dt.sqrt();
        let inc: Vec<f64> = (0..self.values.len())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                z * scale
            })
            .collect();
        for (w, d) in self.values.iter_mut().zip(&inc) {
            *w += d;
        }
        self.time += dt;
        Ok(inc)
    }
}

/// User-supplied noise map returning `K` columns.
pub type NoiseMap = Arc<dyn Fn(f64, &SpectralField) -> Vec<SpectralField> + Send + Sync>;

#[derive(Clone)]
pub enum NoiseKind {
    Zero,
    /// `σ(t,u) e_k = (ε_σ/C_σ) P₀(φ * Π_k u)` with `Π_k` a mode-group selection.
    LinearConvolution,
    User(NoiseMap),
}

impl fmt::Debug for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::LinearConvolution => write!(f, "LinearConvolution"),
            Self::User(_) => write!(f, "User(..)"),
        }
    }
}

/// Serializable description of the noise coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKindTag {
    Zero,
    LinearConvolution,
}

/// Immutable noise coefficient, shareable across path workers.
#[derive(Clone, Debug)]
pub struct NoiseCoefficient {
    lattice: Arc<ModeLattice>,
    kind: NoiseKind,
    eps_sigma: f64,
    directions: usize,
    /// `φ̂(n)` per stored index.
    kernel: Vec<f64>,
    /// Column that mode `n` (and `-n`) is routed to.
    group: Vec<u32>,
    c_sigma: f64,
}

impl NoiseCoefficient {
    pub fn zero(lattice: &Arc<ModeLattice>, directions: usize) -> Self {
        Self {
            lattice: lattice.clone(),
            kind: NoiseKind::Zero,
            eps_sigma: 0.0,
            directions,
            kernel: vec![0.0; lattice.len()],
            group: vec![0; lattice.len()],
            c_sigma: 1.0,
        }
    }

    /// Linear convolution noise with the Gaussian kernel `φ̂(n) = exp(-|n|²/N²)`.
    ///
    /// `C_σ` is the largest single-mode amplification of the unnormalized map,
    /// so the Lipschitz constant in every `ℍ^s` is exactly `ε_σ`.
    pub fn linear_convolution(
        lattice: &Arc<ModeLattice>,
        directions: usize,
        eps_sigma: f64,
    ) -> Result<Self, NoiseError> {
        if !(eps_sigma >= 0.0) || !eps_sigma.is_finite() {
            return Err(NoiseError::InvalidScale(eps_sigma));
        }
        if directions == 0 {
            return Err(NoiseError::NoDirections);
        }
        let n2 = (lattice.resolution() * lattice.resolution()) as f64;
        let kernel: Vec<f64> = lattice.k2().iter().map(|&k| (-k / n2).exp()).collect();
        let group = mode_groups(lattice, directions);
        let mut coef = Self {
            lattice: lattice.clone(),
            kind: NoiseKind::LinearConvolution,
            eps_sigma,
            directions,
            kernel,
            group,
            c_sigma: 1.0,
        };
        coef.c_sigma = coef.calibrate();
        Ok(coef)
    }

    pub fn user(lattice: &Arc<ModeLattice>, directions: usize, eps_sigma: f64, map: NoiseMap) -> Self {
        Self {
            lattice: lattice.clone(),
            kind: NoiseKind::User(map),
            eps_sigma,
            directions,
            kernel: vec![0.0; lattice.len()],
            group: vec![0; lattice.len()],
            c_sigma: 1.0,
        }
    }

    /// Largest `‖σ₁(e)‖_{ℍ^s} / ‖e‖_{H^s}` over single-mode solenoidal fields `e`,
    /// where `σ₁` is the map with `ε_σ = C_σ = 1`. The map is diagonal in `n`,
    /// so every `s` gives the same maximum.
    fn calibrate(&self) -> f64 {
        let lat = &self.lattice;
        let mut best: f64 = 0.0;
        for idx in 0..lat.len() {
            if lat.active()[idx] && ModeLattice::is_canonical(lat.wavevector(idx)) {
                best = best.max(self.kernel[idx]);
            }
        }
        // absorbs roundoff in the projected columns
        best * (1.0 + 1e-12)
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn eps_sigma(&self) -> f64 {
        self.eps_sigma
    }

    pub fn c_sigma(&self) -> f64 {
        self.c_sigma
    }

    pub fn directions(&self) -> usize {
        self.directions
    }

    pub fn lattice(&self) -> &Arc<ModeLattice> {
        &self.lattice
    }

    /// Whether the coefficient vanishes identically.
    pub fn is_zero(&self) -> bool {
        matches!(self.kind, NoiseKind::Zero)
            || (matches!(self.kind, NoiseKind::LinearConvolution) && self.eps_sigma == 0.0)
    }

    /// The `K` columns `σ(t,u) e_k`.
    pub fn apply_sigma(&self, t: f64, u: &SpectralField) -> Vec<SpectralField> {
        match &self.kind {
            NoiseKind::Zero => vec![SpectralField::zeros(&self.lattice); self.directions],
            NoiseKind::User(map) => map(t, u),
            NoiseKind::LinearConvolution => {
                let scale = self.eps_sigma / self.c_sigma;
                (0..self.directions)
                    .map(|k| {
                        let k = k as u32;
                        let mut factor = vec![0.0; self.lattice.len()];
                        for (idx, f) in factor.iter_mut().enumerate() {
                            if self.group[idx] == k {
                                *f = scale * self.kernel[idx];
                            }
                        }
                        u.apply_multiplier(&factor).leray_project()
                    })
                    .collect()
            }
        }
    }

    /// `Σ_k (σ(t,a) - σ(t,b)) e_k ΔW_k`. Pass a zero field as `b` for `σ(t,a) ΔW`.
    pub fn difference_increment(
        &self,
        t: f64,
        a: &SpectralField,
        b: &SpectralField,
        dw: &[f64],
    ) -> SpectralField {
        match &self.kind {
            NoiseKind::Zero => SpectralField::zeros(&self.lattice),
            NoiseKind::LinearConvolution => {
                if self.eps_sigma == 0.0 {
                    return SpectralField::zeros(&self.lattice);
                }
                let scale = self.eps_sigma / self.c_sigma;
                let factor: Vec<f64> = self
                    .group
                    .iter()
                    .zip(&self.kernel)
                    .map(|(&g, &phi)| scale * phi * dw[g as usize])
                    .collect();
                // σ is linear here, and a scalar multiplier keeps solenoidal fields solenoidal
                let diff = a.sub(b);
                let out = diff.apply_multiplier(&factor);
                if diff.is_solenoidal() {
                    out
                } else {
                    out.leray_project()
                }
            }
            NoiseKind::User(map) => {
                let ca = map(t, a);
                let cb = map(t, b);
                let mut out = SpectralField::zeros(&self.lattice);
                for ((x, y), d) in ca.iter().zip(&cb).zip(dw) {
                    out.axpy(*d, x);
                    out.axpy(-*d, y);
                }
                out
            }
        }
    }

    /// `Σ_k (σ(t,w+v) - σ(t,w)) e_k ΔW_k`. For linear noise this is `σ(t,v) ΔW`,
    /// which avoids forming `(w+v) - w` when `v` is far smaller than `w`.
    pub fn increment_above(&self, t: f64, w: &SpectralField, v: &SpectralField, dw: &[f64]) -> SpectralField {
        match &self.kind {
            NoiseKind::User(_) => self.difference_increment(t, &w.add(v), w, dw),
            _ => self.difference_increment(t, v, &SpectralField::zeros(&self.lattice), dw),
        }
    }

    /// `‖σ(t,a) - σ(t,b)‖²_{ℍ^alpha}` without materializing the columns.
    pub fn difference_hs_norm_sq(&self, t: f64, a: &SpectralField, b: &SpectralField, alpha: f64) -> f64 {
        match &self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::LinearConvolution => {
                let scale = self.eps_sigma / self.c_sigma;
                let factor: Vec<f64> = self.kernel.iter().map(|phi| scale * phi).collect();
                a.sub(b).apply_multiplier(&factor).leray_project().sobolev_norm_sq(alpha)
            }
            NoiseKind::User(map) => {
                let ca = map(t, a);
                let cb = map(t, b);
                ca.iter().zip(&cb).map(|(x, y)| x.sub(y).sobolev_norm_sq(alpha)).sum()
            }
        }
    }
}

/// Routes each conjugate pair `±n` to one of `k` columns, in order of
/// increasing `|n|` then lexicographic order of the canonical representative.
fn mode_groups(lattice: &ModeLattice, k: usize) -> Vec<u32> {
    let mut canon: Vec<usize> = (0..lattice.len())
        .filter(|&i| lattice.active()[i] && ModeLattice::is_canonical(lattice.wavevector(i)))
        .collect();
    canon.sort_by(|&a, &b| {
        lattice.k2()[a]
            .partial_cmp(&lattice.k2()[b])
            .expect("finite wavenumbers")
            .then(lattice.wavevector(a).cmp(&lattice.wavevector(b)))
    });
    let mut group = vec![0u32; lattice.len()];
    for (rank, &idx) in canon.iter().enumerate() {
        let g = (rank % k) as u32;
        group[idx] = g;
        group[lattice.conjugate_index(idx)] = g;
    }
    group
}

/// `(Σ_k ‖col_k‖²_{H^alpha})^{1/2}`.
pub fn hs_norm(columns: &[SpectralField], alpha: f64) -> f64 {
    columns.iter().map(|c| c.sobolev_norm_sq(alpha)).sum::<f64>().sqrt()
}

/// Monte Carlo check of the Itô isometry and the maximal (BDG) inequality for a
/// constant integrand.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsometryReport {
    pub paths: usize,
    pub horizon: f64,
    /// Sample mean of `‖∫₀ᵀ g dW‖²_{L²}`.
    pub estimate: f64,
    pub std_error: f64,
    /// `T ‖g‖²_{𝕃²}`.
    pub expected: f64,
    /// `(estimate - expected) / std_error`, 0 when both vanish.
    pub z_score: f64,
    /// Sample mean of `sup_{s<=T} ‖∫₀ˢ g dW‖_{L²}` on the step grid.
    pub sup_mean: f64,
    /// `sup_mean / (T ‖g‖²_{𝕃²})^{1/2}`: the fitted maximal-inequality constant.
    pub bdg_constant: f64,
}

pub const MIN_ISOMETRY_PATHS: usize = 100;

/// Integrates the constant operator `g` against `paths` independent Wiener
/// paths with step `dt` and compares with the Itô isometry.
pub fn ito_integral_check(
    g: &[SpectralField],
    horizon: f64,
    dt: f64,
    paths: usize,
    seed: u64,
) -> Result<IsometryReport, NoiseError> {
    if paths < MIN_ISOMETRY_PATHS {
        return Err(NoiseError::TooFewPaths { min: MIN_ISOMETRY_PATHS, got: paths });
    }
    if !(dt > 0.0) {
        return Err(NoiseError::NonPositiveStep(dt));
    }
    let k = g.len();
    // Gram matrix: ‖Σ_k g_k W_k‖² = Σ_{k,l} G_kl W_k W_l
    let gram: Vec<Vec<f64>> = (0..k).map(|a| (0..k).map(|b| g[a].inner(&g[b])).collect()).collect();
    let hs_sq: f64 = (0..k).map(|a| gram[a][a]).sum();
    let steps = (horizon / dt).round().max(1.0) as usize;
    let step = horizon / steps as f64;
    let quad = |w: &[f64]| -> f64 {
        let mut acc = 0.0;
        for a in 0..k {
            for b in 0..k {
                acc += gram[a][b] * w[a] * w[b];
            }
        }
        acc.max(0.0)
    };
    let mut finals = Vec::with_capacity(paths);
    let mut sups = Vec::with_capacity(paths);
    for p in 0..paths {
        let mut basis = WienerBasis::new(k, seed.wrapping_add(p as u64));
        let mut sup: f64 = 0.0;
        for _ in 0..steps {
            basis.sample_increment(step)?;
            sup = sup.max(quad(basis.values()).sqrt());
        }
        finals.push(quad(basis.values()));
        sups.push(sup);
    }
    let m = paths as f64;
    let mean = finals.iter().sum::<f64>() / m;
    let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let std_error = (var / m).sqrt();
    let expected = horizon * hs_sq;
    let z_score = if std_error > 0.0 { (mean - expected) / std_error } else { 0.0 };
    let sup_mean = sups.iter().sum::<f64>() / m;
    let bdg_constant = if expected > 0.0 { sup_mean / expected.sqrt() } else { 0.0 };
    Ok(IsometryReport {
        paths,
        horizon,
        estimate: mean,
        std_error,
        expected,
        z_score,
        sup_mean,
        bdg_constant,
    })
}
