use serde::{Deserialize, Serialize};

use crate::spectral::SpectralField;

/// Smooth bump with `θ ≡ 1` on `[0, 1]`, `θ ≡ 0` on `[2, ∞)`, monotone in between.
///
/// The transition is the quintic smoothstep, so `θ` is C² across both knots.
pub fn theta(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        let y = x - 1.0;
        1.0 - y * y * y * (10.0 - 15.0 * y + 6.0 * y * y)
    }
}

/// Running norm-plus-dissipation functionals of one level and its cutoff values.
///
/// `Q_{k,α}(t) = ‖v(t)‖_{H^{1/2+α}} + (∫₀ᵗ ‖v‖²_{H^{3/2+α}})^{1/2}` for `α ∈ {0, δ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffState {
    pub delta: f64,
    /// `M_k`, the `Q_{k,δ}` threshold of `ψ_k`.
    pub m_threshold: f64,
    /// `ε̄ / 2^k`, the `Q_{k,0}` threshold of `φ_k`.
    pub eps_threshold: f64,
    pub time: f64,
    pub norm0: f64,
    pub norm_delta: f64,
    pub integral0: f64,
    pub integral_delta: f64,
    rate0: f64,
    rate_delta: f64,
    initialized: bool,
    pub psi: f64,
    pub phi: f64,
    /// `ζ_{k-1} = Π_{i<k} ψ_i`, 1 on level 0.
    pub zeta: f64,
}

impl CutoffState {
    pub fn new(delta: f64, m_threshold: f64, eps_threshold: f64) -> Self {
        Self {
            delta,
            m_threshold,
            eps_threshold,
            time: 0.0,
            norm0: 0.0,
            norm_delta: 0.0,
            integral0: 0.0,
            integral_delta: 0.0,
            rate0: 0.0,
            rate_delta: 0.0,
            initialized: false,
            psi: 1.0,
            phi: 1.0,
            zeta: 1.0,
        }
    }

    pub fn q0(&self) -> f64 {
        self.norm0 + self.integral0.sqrt()
    }

    pub fn q_delta(&self) -> f64 {
        self.norm_delta + self.integral_delta.sqrt()
    }

    /// Trapezoidal update of the dissipation integrals from the state at grid time `t`,
    /// then re-evaluation of `ψ_k` and `φ_k`.
    pub fn observe(&mut self, t: f64, v: &SpectralField) {
        let [e0, e_delta, rate0, rate_delta] = v.sobolev_norms_sq(self.norm_exponents());
        self.observe_values(t, e0.sqrt(), e_delta.sqrt(), rate0, rate_delta);
    }

    /// Exponents of the squared norms `observe` needs, `[1/2, 1/2+δ, 3/2, 3/2+δ]`.
    pub(crate) fn norm_exponents(&self) -> [f64; 4] {
        let d = self.delta;
        [0.5, 0.5 + d, 1.5, 1.5 + d]
    }

    pub(crate) fn observe_values(&mut self, t: f64, norm0: f64, norm_delta: f64, rate0: f64, rate_delta: f64) {
        if self.initialized {
            let h = t - self.time;
            self.integral0 += 0.5 * h * (self.rate0 + rate0);
            self.integral_delta += 0.5 * h * (self.rate_delta + rate_delta);
        }
        self.initialized = true;
        self.time = t;
        self.norm0 = norm0;
        self.norm_delta = norm_delta;
        self.rate0 = rate0;
        self.rate_delta = rate_delta;
        self.psi = psi_value(self.q_delta(), self.m_threshold);
        self.phi = theta(self.q0() / self.eps_threshold);
    }

    /// `(ψ_k φ_k)²`.
    pub fn nonlinear_weight(&self) -> f64 {
        let a = self.psi * self.phi;
        a * a
    }
}

/// `θ(q / M)`; a vanishing threshold only admits the zero state.
pub(crate) fn psi_value(q: f64, m: f64) -> f64 {
    if m > 0.0 {
        theta(q / m)
    } else if q == 0.0 {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_support_and_monotonicity() {
        assert_eq!(theta(0.0), 1.0);
        assert_eq!(theta(1.0), 1.0);
        assert_eq!(theta(2.0), 0.0);
        assert_eq!(theta(7.0), 0.0);
        let mut prev = 1.0;
        for i in 0..=1000 {
            let x = 1.0 + i as f64 / 1000.0;
            let v = theta(x);
            assert!(v <= prev + 1e-15 && (0.0..=1.0).contains(&v));
            prev = v;
        }
        assert!((theta(1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn theta_is_c2_at_knots() {
        let h = 1e-4;
        for knot in [1.0, 2.0] {
            let d1 = (theta(knot + h) - theta(knot - h)) / (2.0 * h);
            let d2 = (theta(knot + h) - 2.0 * theta(knot) + theta(knot - h)) / (h * h);
            assert!(d1.abs() < 1e-6, "{d1}");
            assert!(d2.abs() < 1e-2, "{d2}");
        }
    }

    #[test]
    fn cutoff_values_follow_thresholds() {
        let mut c = CutoffState::new(0.25, 1.0, 0.5);
        c.observe_values(0.0, 0.4, 0.9, 0.0, 0.0);
        assert_eq!((c.psi, c.phi), (1.0, 1.0));
        c.observe_values(0.1, 1.2, 2.5, 0.0, 0.0);
        assert_eq!((c.psi, c.phi), (0.0, 0.0));
        assert!(c.integral0 == 0.0 && c.q0() == 1.2);
    }
}
