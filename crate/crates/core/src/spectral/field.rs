use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ModeLattice, SobolevExponent, SpectralError};

/// Relative tolerance used when checking the divergence-free constraint.
pub const DIVERGENCE_TOL: f64 = 1e-10;

/// Fourier coefficients of a real, mean-free vector field on the 3-torus.
///
/// `u(x) = Σ_n û(n) e^{i n·x}`; the zero mode and the Nyquist planes are always zero.
#[derive(Clone, Debug)]
pub struct SpectralField {
    lattice: Arc<ModeLattice>,
    comps: [Vec<Complex64>; 3],
    solenoidal: bool,
}

impl SpectralField {
    pub fn zeros(lattice: &Arc<ModeLattice>) -> Self {
        let len = lattice.len();
        Self {
            lattice: lattice.clone(),
            comps: [
                vec![Complex64::new(0.0, 0.0); len],
                vec![Complex64::new(0.0, 0.0); len],
                vec![Complex64::new(0.0, 0.0); len],
            ],
            solenoidal: true,
        }
    }

    /// Builds a field from raw coefficient arrays. Coefficients on inactive
    /// modes (zero mode, Nyquist planes) are discarded so the result is mean-free.
    pub fn from_components(
        lattice: &Arc<ModeLattice>,
        comps: [Vec<Complex64>; 3],
    ) -> Result<Self, SpectralError> {
        if comps.iter().any(|c| c.len() != lattice.len()) {
            return Err(SpectralError::LengthMismatch {
                expected: lattice.len(),
                got: comps.iter().map(Vec::len).find(|&l| l != lattice.len()).unwrap_or(0),
            });
        }
        let mut field = Self {
            lattice: lattice.clone(),
            comps,
            solenoidal: false,
        };
        field.clear_inactive();
        field.solenoidal = field.divergence_residual() <= DIVERGENCE_TOL;
        Ok(field)
    }

    /// Wraps coefficients the caller has already masked and projected.
    pub(crate) fn from_projected(lattice: &Arc<ModeLattice>, comps: [Vec<Complex64>; 3]) -> Self {
        Self {
            lattice: lattice.clone(),
            comps,
            solenoidal: true,
        }
    }

    /// Sets `û(n) = value` and `û(-n) = conj(value)` so the field stays real.
    pub fn set_mode(&mut self, n: [i32; 3], value: [Complex64; 3]) -> Result<(), SpectralError> {
        let idx = self.lattice.index_of(n).ok_or(SpectralError::ModeOutOfRange(n))?;
        if !self.lattice.active()[idx] {
            return Err(SpectralError::ModeOutOfRange(n));
        }
        let cidx = self.lattice.conjugate_index(idx);
        for (c, v) in self.comps.iter_mut().zip(value) {
            c[idx] = v;
            c[cidx] = v.conj();
        }
        self.solenoidal = self.divergence_residual() <= DIVERGENCE_TOL;
        Ok(())
    }

    /// Random real solenoidal field with coefficients supported on
    /// `0 < |n| <= max_wavenumber` inside the dealiased set, amplitude decaying
    /// like `(1 + |n|^2)^{-decay/2}`.
    pub fn random_solenoidal<R: Rng + ?Sized>(
        lattice: &Arc<ModeLattice>,
        rng: &mut R,
        max_wavenumber: f64,
        decay: f64,
    ) -> Self {
        let mut field = Self::zeros(lattice);
        for idx in 0..lattice.len() {
            let w = lattice.wavevector(idx);
            if !lattice.active()[idx]
                || !lattice.dealias_mask()[idx]
                || !ModeLattice::is_canonical(w)
                || lattice.k2()[idx] > max_wavenumber * max_wavenumber
            {
                continue;
            }
            let amp = (1.0 + lattice.k2()[idx]).powf(-decay / 2.0);
            let cidx = lattice.conjugate_index(idx);
            for c in field.comps.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let v = Complex64::new(re, im) * amp;
                c[idx] = v;
                c[cidx] = v.conj();
            }
        }
        field.leray_project()
    }

    pub fn lattice(&self) -> &Arc<ModeLattice> {
        &self.lattice
    }

    pub fn component(&self, j: usize) -> &[Complex64] {
        &self.comps[j]
    }

    pub fn components(&self) -> &[Vec<Complex64>; 3] {
        &self.comps
    }

    pub fn into_components(self) -> [Vec<Complex64>; 3] {
        self.comps
    }

    /// Whether the field is known to satisfy `n · û(n) = 0`.
    pub fn is_solenoidal(&self) -> bool {
        self.solenoidal
    }

    pub fn same_lattice(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.lattice, &other.lattice) || *self.lattice == *other.lattice
    }

    pub(crate) fn check_lattice(&self, other: &Self) -> Result<(), SpectralError> {
        if self.same_lattice(other) {
            Ok(())
        } else {
            Err(SpectralError::LatticeMismatch {
                left: self.lattice.resolution(),
                right: other.lattice.resolution(),
            })
        }
    }

    fn clear_inactive(&mut self) {
        let active = self.lattice.active();
        for c in self.comps.iter_mut() {
            for (v, &a) in c.iter_mut().zip(active) {
                if !a {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.re == 0.0 && v.im == 0.0))
    }

    /// Leray projection: `(δ_jk - n_j n_k / |n|^2) f̂_k(n)`, zero at `n = 0`.
    pub fn leray_project(&self) -> Self {
        let lat = &self.lattice;
        let mut out = Self::zeros(lat);
        let [a, b, c] = &self.comps;
        let [oa, ob, oc] = &mut out.comps;
        for idx in 0..lat.len() {
            let k2 = lat.k2()[idx];
            if !lat.active()[idx] || k2 == 0.0 {
                continue;
            }
            let w = lat.wavevector(idx);
            let (n1, n2, n3) = (w[0] as f64, w[1] as f64, w[2] as f64);
            let dot = (a[idx] * n1 + b[idx] * n2 + c[idx] * n3) / k2;
            oa[idx] = a[idx] - dot * n1;
            ob[idx] = b[idx] - dot * n2;
            oc[idx] = c[idx] - dot * n3;
        }
        out.solenoidal = true;
        out
    }

    /// `Σ_n (1+|n|^2)^alpha Σ_j |û_j(n)|^2`.
    pub fn sobolev_norm_sq(&self, alpha: impl Into<SobolevExponent>) -> f64 {
        let weights = self.lattice.weights(alpha.into().value());
        let mut acc = 0.0;
        for c in &self.comps {
            acc += c.iter().zip(weights.iter()).map(|(v, w)| w * v.norm_sqr()).sum::<f64>();
        }
        acc
    }

    /// Non-homogeneous Sobolev norm with multiplier `(1+|n|^2)^{alpha/2}`.
    /// Several squared Sobolev norms from one pass over the coefficients.
    pub fn sobolev_norms_sq<const K: usize>(&self, alphas: [f64; K]) -> [f64; K] {
        let weights = alphas.map(|a| self.lattice.weights(SobolevExponent::from(a).value()));
        let [a, b, c] = &self.comps;
        let mut acc = [0.0; K];
        for idx in 0..a.len() {
            let e = a[idx].norm_sqr() + b[idx].norm_sqr() + c[idx].norm_sqr();
            if e == 0.0 {
                continue;
            }
            for (s, w) in acc.iter_mut().zip(&weights) {
                *s += w[idx] * e;
            }
        }
        acc
    }

    pub fn sobolev_norm(&self, alpha: impl Into<SobolevExponent>) -> f64 {
        self.sobolev_norm_sq(alpha).sqrt()
    }

    /// Coefficient-space L² norm (Parseval, up to the torus volume).
    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    /// Real part of `Σ_n Σ_j conj(û_j(n)) v̂_j(n)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum::<f64>())
            .sum()
    }

    /// Applies the Fourier multiplier `Λ^beta = (1 + |n|^2)^{beta/2}`.
    pub fn lambda(&self, beta: f64) -> Self {
        let weights = self.lattice.weights(beta / 2.0);
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            for (v, w) in c.iter_mut().zip(weights.iter()) {
                *v *= *w;
            }
        }
        out
    }

    /// Multiplies each coefficient by a real per-mode factor.
    pub fn apply_multiplier(&self, factor: &[f64]) -> Self {
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            for (v, w) in c.iter_mut().zip(factor) {
                *v *= *w;
            }
        }
        out
    }

    /// Keeps only the modes where `keep` is true.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            for (idx, v) in c.iter_mut().enumerate() {
                if !keep(idx) {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
        out
    }

    /// `max_n |n · û(n)| / |n|`, relative to the largest coefficient magnitude.
    pub fn divergence_residual(&self) -> f64 {
        let lat = &self.lattice;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for idx in 0..lat.len() {
            let k2 = lat.k2()[idx];
            let mag = (0..3).map(|j| self.comps[j][idx].norm_sqr()).sum::<f64>().sqrt();
            scale = scale.max(mag);
            if k2 == 0.0 {
                continue;
            }
            let w = lat.wavevector(idx);
            let div: Complex64 = (0..3).map(|j| self.comps[j][idx] * w[j] as f64).sum();
            worst = worst.max(div.norm() / k2.sqrt());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// `max_n |û(-n) - conj(û(n))|`, relative to the largest coefficient magnitude.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let lat = &self.lattice;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for c in &self.comps {
            for idx in 0..lat.len() {
                scale = scale.max(c[idx].norm());
                worst = worst.max((c[lat.conjugate_index(idx)] - c[idx].conj()).norm());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale_in_place(s);
        out
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for c in self.comps.iter_mut() {
            for v in c.iter_mut() {
                *v *= s;
            }
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        debug_assert!(self.same_lattice(other));
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y * s;
            }
        }
        self.solenoidal &= other.solenoidal;
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

/// Bitwise equality of the coefficient arrays.
impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.same_lattice(other)
            && self.comps.iter().zip(&other.comps).all(|(a, b)| {
                a.iter()
                    .zip(b)
                    .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
            })
    }
}
