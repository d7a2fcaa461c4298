use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::SpectralError;

/// Truncated set of integer wavevectors on the 3-torus `[0, 2π)^3`.
///
/// Coefficients are stored in FFT order: index `i` on an axis carries the
/// wavenumber `i` for `i < N/2` and `i - N` otherwise. The Nyquist plane
/// (`i == N/2`, wavenumber `-N/2`) has no conjugate partner inside the
/// lattice, so it is kept inactive and every stored field is zero there.
#[derive(Debug)]
pub struct ModeLattice {
    n: usize,
    wavevectors: Vec<[i32; 3]>,
    k2: Vec<f64>,
    dealias: Vec<bool>,
    active: Vec<bool>,
    conj_index: Vec<usize>,
    weights: Mutex<HashMap<u64, Arc<[f64]>>>,
}

impl ModeLattice {
    /// Builds the lattice for resolution `n` per axis (even, at least 4).
    pub fn new(n: usize) -> Result<Arc<Self>, SpectralError> {
        if n < 4 || n % 2 != 0 {
            return Err(SpectralError::InvalidResolution(n));
        }
        let len = n * n * n;
        let half = (n / 2) as i32;
        let freq = |i: usize| -> i32 {
            let i = i as i32;
            if i < half {
                i
            } else {
                i - n as i32
            }
        };
        let mut wavevectors = Vec::with_capacity(len);
        let mut k2 = Vec::with_capacity(len);
        let mut dealias = Vec::with_capacity(len);
        let mut active = Vec::with_capacity(len);
        let mut conj_index = Vec::with_capacity(len);
        let wrap = |f: i32| -> usize { f.rem_euclid(n as i32) as usize };
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let w = [freq(i), freq(j), freq(l)];
                    let nyquist = w.iter().any(|&c| c == -half);
                    let zero = w == [0, 0, 0];
                    k2.push(w.iter().map(|&c| (c as f64) * (c as f64)).sum());
                    // 2/3 rule: keep 3|n_i| < N on every axis
                    dealias.push(w.iter().all(|&c| 3 * c.unsigned_abs() < n as u32));
                    active.push(!nyquist && !zero);
                    conj_index.push((wrap(-w[0]) * n + wrap(-w[1])) * n + wrap(-w[2]));
                    wavevectors.push(w);
                }
            }
        }
        Ok(Arc::new(Self {
            n,
            wavevectors,
            k2,
            dealias,
            active,
            conj_index,
            weights: Mutex::new(HashMap::new()),
        }))
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Number of stored coefficients per component (`N^3`).
    pub fn len(&self) -> usize {
        self.wavevectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavevectors.is_empty()
    }

    pub fn wavevector(&self, idx: usize) -> [i32; 3] {
        self.wavevectors[idx]
    }

    pub fn wavevectors(&self) -> &[[i32; 3]] {
        &self.wavevectors
    }

    /// `|n|^2` per stored index.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// True for modes retained by the 2/3 dealiasing rule.
    pub fn dealias_mask(&self) -> &[bool] {
        &self.dealias
    }

    /// True for modes that may carry a nonzero coefficient (not the zero mode,
    /// not on the Nyquist planes).
    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Index of `-n` for the mode stored at `idx`.
    pub fn conjugate_index(&self, idx: usize) -> usize {
        self.conj_index[idx]
    }

    /// Flat index of wavevector `n`, if it is representable.
    pub fn index_of(&self, w: [i32; 3]) -> Option<usize> {
        let half = (self.n / 2) as i32;
        if w.iter().any(|&c| c < -half || c >= half) {
            return None;
        }
        let n = self.n as i32;
        let wrap = |c: i32| c.rem_euclid(n) as usize;
        Some((wrap(w[0]) * self.n + wrap(w[1])) * self.n + wrap(w[2]))
    }

    /// Lexicographic half-space representative: `n > 0` in `(n1, n2, n3)` order.
    pub fn is_canonical(w: [i32; 3]) -> bool {
        w[0] > 0 || (w[0] == 0 && (w[1] > 0 || (w[1] == 0 && w[2] > 0)))
    }

    /// Multiplier `(1 + |n|^2)^alpha` per stored index; cached per exponent.
    pub fn weights(&self, alpha: f64) -> Arc<[f64]> {
        let key = alpha.to_bits();
        let mut cache = self.weights.lock().expect("weight cache poisoned");
        cache
            .entry(key)
            .or_insert_with(|| self.k2.iter().map(|&k| (1.0 + k).powf(alpha)).collect())
            .clone()
    }
}

impl PartialEq for ModeLattice {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}
