use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ModeLattice, SpectralError, SpectralField};

pub const SNAPSHOT_SCHEMA: &str = "snse.field/1";

/// Mode entry `[n1, n2, n3, re1, im1, re2, im2, re3, im3]`.
pub type ModeEntry = (i32, i32, i32, f64, f64, f64, f64, f64, f64);

/// JSON form of a field: lattice header plus every nonzero mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub schema: String,
    pub n: usize,
    pub delta: f64,
    pub modes: Vec<ModeEntry>,
}

impl FieldSnapshot {
    pub fn from_field(field: &SpectralField, delta: f64) -> Self {
        let lat = field.lattice();
        let mut modes = Vec::new();
        for idx in 0..lat.len() {
            let c: [Complex64; 3] = std::array::from_fn(|j| field.component(j)[idx]);
            if c.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
                continue;
            }
            let w = lat.wavevector(idx);
            modes.push((w[0], w[1], w[2], c[0].re, c[0].im, c[1].re, c[1].im, c[2].re, c[2].im));
        }
        Self {
            schema: SNAPSHOT_SCHEMA.to_string(),
            n: lat.resolution(),
            delta,
            modes,
        }
    }

    /// Rebuilds the field; `lattice` is reused when its resolution matches.
    pub fn to_field(&self, lattice: Option<&Arc<ModeLattice>>) -> Result<SpectralField, SpectralError> {
        if self.schema != SNAPSHOT_SCHEMA {
            return Err(SpectralError::Snapshot(format!("unknown schema {:?}", self.schema)));
        }
        let lat = match lattice {
            Some(l) if l.resolution() == self.n => l.clone(),
            _ => ModeLattice::new(self.n)?,
        };
        let mut comps: [Vec<Complex64>; 3] =
            std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); lat.len()]);
        for &(n1, n2, n3, a, b, c, d, e, f) in &self.modes {
            let idx = lat
                .index_of([n1, n2, n3])
                .ok_or(SpectralError::ModeOutOfRange([n1, n2, n3]))?;
            if !lat.active()[idx] {
                return Err(SpectralError::ModeOutOfRange([n1, n2, n3]));
            }
            comps[0][idx] = Complex64::new(a, b);
            comps[1][idx] = Complex64::new(c, d);
            comps[2][idx] = Complex64::new(e, f);
        }
        SpectralField::from_components(&lat, comps)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SpectralError> {
        serde_json::from_str(text).map_err(|e| SpectralError::Snapshot(e.to_string()))
    }
}
