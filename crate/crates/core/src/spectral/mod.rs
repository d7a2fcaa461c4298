//! Fourier-space vector fields on the 3-torus.
//!
//! Fields are stored as full `N^3` complex coefficient arrays per component in
//! FFT order. Every stored field is real (conjugate-symmetric) and mean-free.
//! Norms use the non-homogeneous multiplier `(1 + |n|^2)^{alpha/2}`.

mod field;
mod lattice;
mod product;
mod snapshot;
mod transform;

pub use field::{SpectralField, DIVERGENCE_TOL};
pub use lattice::ModeLattice;
pub use product::{verify_product_inequality, InequalityReport};
pub use snapshot::{FieldSnapshot, SNAPSHOT_SCHEMA};
pub use transform::{PhysicalField, Transformer};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("resolution must be an even integer >= 4, got {0}")]
    InvalidResolution(usize),
    #[error("coefficient array has length {got}, lattice expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different lattices (N={left} vs N={right})")]
    LatticeMismatch { left: usize, right: usize },
    #[error("wavevector {0:?} is not an active mode of the lattice")]
    ModeOutOfRange([i32; 3]),
    #[error("advecting field is not divergence-free (relative residual {0:.3e})")]
    NotSolenoidal(f64),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// Sobolev regularity index `alpha` of the norm `‖Λ^alpha f‖_{L²}`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SobolevExponent(f64);

impl SobolevExponent {
    pub const L2: Self = Self(0.0);
    /// The scaling-critical index `1/2`.
    pub const CRITICAL: Self = Self(0.5);
    /// One derivative above critical, the dissipation norm.
    pub const DISSIPATION: Self = Self(1.5);

    pub const fn new(alpha: f64) -> Self {
        Self(alpha)
    }

    pub const fn value(self) -> f64 {
        self.0
    }

    pub fn shifted(self, by: f64) -> Self {
        Self(self.0 + by)
    }
}

impl From<f64> for SobolevExponent {
    fn from(alpha: f64) -> Self {
        Self(alpha)
    }
}
