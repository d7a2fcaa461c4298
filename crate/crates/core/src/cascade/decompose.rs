use serde::{Deserialize, Serialize};

use super::CascadeError;
use crate::spectral::SpectralField;

/// Relative slack allowed on the smallness precondition `‖u₀‖_{H^{1/2}} <= ε₀`.
const DATA_SLACK: f64 = 1e-12;

/// Frequency band `inner < |n| <= outer` assigned to one piece.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub inner: f64,
    /// `f64::INFINITY` for the folded tail piece.
    pub outer: f64,
}

impl Shell {
    pub fn contains(&self, radius: f64) -> bool {
        radius > self.inner && radius <= self.outer
    }
}

/// `u₀ = Σ_k v₀^{(k)}` with `‖v₀^{(0)}‖_{H^{1/2}} <= 2ε₀` and
/// `‖v₀^{(k)}‖_{H^{1/2}} <= ε₀/4^k` for `k >= 1`.
#[derive(Clone, Debug)]
pub struct DataDecomposition {
    pub eps0: f64,
    pub delta: f64,
    pub pieces: Vec<SpectralField>,
    pub shells: Vec<Shell>,
    /// `‖v₀^{(k)}‖_{H^{1/2}}`.
    pub half_norms: Vec<f64>,
    /// `𝕄_k = ‖v₀^{(k)}‖_{H^{1/2+δ}}`.
    pub data_bounds: Vec<f64>,
}

impl DataDecomposition {
    pub fn levels(&self) -> usize {
        self.pieces.len()
    }

    /// Bound on `‖v₀^{(k)}‖_{H^{1/2}}`: `2ε₀` at level 0, `ε₀/4^k` above.
    pub fn level_bound(eps0: f64, k: usize) -> f64 {
        if k == 0 {
            2.0 * eps0
        } else {
            eps0 / 4f64.powi(k as i32)
        }
    }

    pub fn sum(&self) -> SpectralField {
        let mut total = SpectralField::zeros(self.pieces[0].lattice());
        for p in &self.pieces {
            total.axpy(1.0, p);
        }
        total
    }
}

/// Splits `u₀` into `k_max + 1` frequency-disjoint pieces along dyadic radii
/// `2, 4, 8, ...`.
///
/// Level `k` greedily takes whole shells (at least one while shells remain)
/// until the remaining tail satisfies `‖tail‖_{H^{1/2}} <= ε₀/4^{k+1}`, which
/// bounds level `k+1`. Everything beyond the last radius is folded into the
/// final piece.
pub fn decompose(u0: &SpectralField, eps0: f64, delta: f64, k_max: usize) -> Result<DataDecomposition, CascadeError> {
    if !(eps0 > 0.0) {
        return Err(CascadeError::InvalidParameter(format!("eps0 must be positive, got {eps0}")));
    }
    let norm = u0.sobolev_norm(0.5);
    if norm > eps0 * (1.0 + DATA_SLACK) {
        return Err(CascadeError::DataTooLarge { norm, eps0 });
    }
    let div = u0.divergence_residual();
    if div > crate::spectral::DIVERGENCE_TOL {
        return Err(CascadeError::Spectral(crate::spectral::SpectralError::NotSolenoidal(div)));
    }
    let lat = u0.lattice();
    let max_radius = lat.k2().iter().cloned().fold(0.0, f64::max).sqrt();
    let mut radii = vec![2.0];
    while *radii.last().expect("nonempty") < max_radius {
        let next = radii.last().expect("nonempty") * 2.0;
        radii.push(next);
    }
    // H^{1/2} energy per shell j: (radii[j-1], radii[j]]
    let weights = lat.weights(0.5);
    let mut shell_energy = vec![0.0; radii.len()];
    for idx in 0..lat.len() {
        let e: f64 = (0..3).map(|j| u0.component(j)[idx].norm_sqr()).sum::<f64>() * weights[idx];
        if e == 0.0 {
            continue;
        }
        let r = lat.k2()[idx].sqrt();
        let j = radii.iter().position(|&rad| r <= rad).expect("radius within last shell");
        shell_energy[j] += e;
    }
    // tail[j] = H^{1/2} norm of all modes with |n| > radii[j]
    let mut tail = vec![0.0; radii.len()];
    let mut acc: f64 = 0.0;
    for j in (0..radii.len()).rev() {
        tail[j] = acc.sqrt();
        acc += shell_energy[j];
    }

    let mut shells = Vec::with_capacity(k_max + 1);
    let mut inner = 0.0;
    let mut next_shell = 0usize;
    for k in 0..k_max {
        let target = eps0 / 4f64.powi(k as i32 + 1);
        let mut j = next_shell;
        if j >= radii.len() {
            shells.push(Shell { inner, outer: inner });
            continue;
        }
        while j + 1 < radii.len() && tail[j] > target {
            j += 1;
        }
        shells.push(Shell { inner, outer: radii[j] });
        inner = radii[j];
        next_shell = j + 1;
    }
    shells.push(Shell { inner, outer: f64::INFINITY });

    let pieces: Vec<SpectralField> = shells
        .iter()
        .map(|s| u0.restrict(|idx| s.contains(lat.k2()[idx].sqrt())))
        .collect();
    let half_norms: Vec<f64> = pieces.iter().map(|p| p.sobolev_norm(0.5)).collect();
    for (k, &h) in half_norms.iter().enumerate() {
        let bound = DataDecomposition::level_bound(eps0, k);
        if h > bound {
            return Err(CascadeError::DecompositionBound { level: k, norm: h, bound });
        }
    }
    let data_bounds = pieces.iter().map(|p| p.sobolev_norm(0.5 + delta)).collect();
    Ok(DataDecomposition {
        eps0,
        delta,
        pieces,
        shells,
        half_norms,
        data_bounds,
    })
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::spectral::ModeLattice;

    #[test]
    fn zero_data_gives_zero_pieces() {
        let lat = ModeLattice::new(8).unwrap();
        let d = decompose(&SpectralField::zeros(&lat), 0.1, 0.25, 5).unwrap();
        assert_eq!(d.levels(), 6);
        assert!(d.pieces.iter().all(SpectralField::is_zero));
        assert!(d.data_bounds.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn low_shell_data_stays_on_level_zero() {
        let lat = ModeLattice::new(16).unwrap();
        let z = Complex64::new(0.0, 0.0);
        let mut u = SpectralField::zeros(&lat);
        u.set_mode([1, 0, 0], [z, Complex64::new(1.0, 0.0), z]).unwrap();
        u.set_mode([1, 1, 0], [z, z, Complex64::new(0.0, 2.0)]).unwrap();
        let eps0 = 0.05;
        let u = u.scaled(eps0 / u.sobolev_norm(0.5));
        let d = decompose(&u, eps0, 0.25, 5).unwrap();
        assert_eq!(d.pieces[0], u);
        assert!(d.pieces[1..].iter().all(SpectralField::is_zero));
    }

    #[test]
    fn oversized_data_is_rejected() {
        let lat = ModeLattice::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = SpectralField::random_solenoidal(&lat, &mut rng, 3.0, 0.0);
        let eps0 = 0.5 * u.sobolev_norm(0.5);
        assert!(matches!(decompose(&u, eps0, 0.25, 3), Err(CascadeError::DataTooLarge { .. })));
    }

    #[test]
    fn random_data_reconstructs_and_respects_bounds() {
        let lat = ModeLattice::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = SpectralField::random_solenoidal(&lat, &mut rng, 10.0, 3.0);
        let eps0 = 0.1;
        let u = u.scaled(eps0 / u.sobolev_norm(0.5));
        let d = decompose(&u, eps0, 0.25, 5).unwrap();
        let defect = u.sub(&d.sum()).sobolev_norm(0.5);
        assert!(defect <= 1e-12 * eps0);
        for (k, p) in d.pieces.iter().enumerate() {
            assert!(p.sobolev_norm(0.5) <= DataDecomposition::level_bound(eps0, k));
            assert!(p.divergence_residual() <= 1e-12);
        }
        assert!(d.pieces.iter().filter(|p| !p.is_zero()).count() >= 2);
    }
}
