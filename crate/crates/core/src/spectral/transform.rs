use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{ModeLattice, SpectralError, SpectralField};

/// Real vector field sampled on the uniform `N^3` grid.
#[derive(Clone, Debug)]
pub struct PhysicalField {
    pub comps: [Vec<f64>; 3],
}

impl PhysicalField {
    pub fn zeros(len: usize) -> Self {
        Self {
            comps: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }
}

/// FFT plans and scratch space for one worker. Not shared between threads.
pub struct Transformer {
    lattice: Arc<ModeLattice>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    work: Vec<Complex64>,
    scratch: Vec<Complex64>,
    buf: Vec<Complex64>,
}

/// Columns gathered per batch on the strided axes.
const BLOCK: usize = 16;

/// Transforms the `stride` interleaved lines of length `n` in `data`
/// (element `i` of line `c` at `i * stride + c`), a block of columns at a time.
fn strided_pass(data: &mut [Complex64], block: &mut [Complex64], fft: &dyn Fft<f64>, scratch: &mut [Complex64], n: usize, stride: usize) {
    let mut base = 0;
    while base < stride {
        let width = BLOCK.min(stride - base);
        for i in 0..n {
            let row = &data[i * stride + base..i * stride + base + width];
            for (b, v) in row.iter().enumerate() {
                block[b * n + i] = *v;
            }
        }
        fft.process_with_scratch(&mut block[..width * n], scratch);
        for i in 0..n {
            let row = &mut data[i * stride + base..i * stride + base + width];
            for (b, v) in row.iter_mut().enumerate() {
                *v = block[b * n + i];
            }
        }
        base += width;
    }
}

impl std::fmt::Debug for Transformer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transformer").field("n", &self.lattice.resolution()).finish()
    }
}

impl Transformer {
    pub fn new(lattice: &Arc<ModeLattice>) -> Self {
        let n = lattice.resolution();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            lattice: lattice.clone(),
            forward,
            inverse,
            work: vec![Complex64::new(0.0, 0.0); n * BLOCK],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            buf: vec![Complex64::new(0.0, 0.0); lattice.len()],
        }
    }

    pub fn lattice(&self) -> &Arc<ModeLattice> {
        &self.lattice
    }

    fn fft3(&mut self, inverse: bool) {
        let n = self.lattice.resolution();
        let nn = n * n;
        let fft = if inverse { &self.inverse } else { &self.forward };
        // contiguous last axis
        fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        // middle axis, slab by slab
        for slab in 0..n {
            strided_pass(&mut self.buf[slab * nn..(slab + 1) * nn], &mut self.work, fft.as_ref(), &mut self.scratch, n, n);
        }
        // first axis
        strided_pass(&mut self.buf, &mut self.work, fft.as_ref(), &mut self.scratch, n, nn);
    }

    /// Synthesizes one real component from its coefficients.
    pub fn scalar_to_physical(&mut self, coeffs: &[Complex64], out: &mut [f64]) {
        self.buf.copy_from_slice(coeffs);
        self.fft3(true);
        for (o, v) in out.iter_mut().zip(&self.buf) {
            *o = v.re;
        }
    }

    /// Analyzes one real component into coefficients (normalized by `N^3`).
    pub fn scalar_to_spectral(&mut self, values: &[f64], out: &mut [Complex64]) {
        for (b, &v) in self.buf.iter_mut().zip(values) {
            *b = Complex64::new(v, 0.0);
        }
        self.fft3(false);
        let norm = 1.0 / self.lattice.len() as f64;
        for (o, v) in out.iter_mut().zip(&self.buf) {
            *o = v * norm;
        }
    }

    /// Synthesizes two real components with one complex transform.
    fn pair_to_physical(&mut self, a: &[Complex64], b: &[Complex64], out_a: &mut [f64], out_b: &mut [f64]) {
        let i = Complex64::new(0.0, 1.0);
        for ((z, x), y) in self.buf.iter_mut().zip(a).zip(b) {
            *z = x + i * y;
        }
        self.fft3(true);
        for ((oa, ob), v) in out_a.iter_mut().zip(out_b.iter_mut()).zip(&self.buf) {
            *oa = v.re;
            *ob = v.im;
        }
    }

    /// Analyzes two real components with one complex transform.
    fn pair_to_spectral(
        &mut self,
        a: &[f64],
        b: &[f64],
        out_a: &mut [Complex64],
        out_b: &mut [Complex64],
        keep: Option<&[bool]>,
    ) {
        for ((z, &x), &y) in self.buf.iter_mut().zip(a).zip(b) {
            *z = Complex64::new(x, y);
        }
        self.fft3(false);
        let half = 0.5 / self.lattice.len() as f64;
        let lat = &self.lattice;
        for idx in 0..lat.len() {
            if keep.is_some_and(|k| !k[idx]) {
                continue;
            }
            let z = self.buf[idx];
            let zc = self.buf[lat.conjugate_index(idx)].conj();
            out_a[idx] = (z + zc) * half;
            // (z - zc) / (2i)
            let d = z - zc;
            out_b[idx] = Complex64::new(d.im, -d.re) * half;
        }
    }

    /// Forward transforms of a list of real arrays, two at a time.
    /// With `keep`, only the flagged coefficients are filled in.
    fn many_to_spectral(&mut self, values: &[&Vec<f64>], keep: Option<&[bool]>) -> Vec<Vec<Complex64>> {
        let len = self.lattice.len();
        let mut out: Vec<Vec<Complex64>> = values.iter().map(|_| vec![Complex64::new(0.0, 0.0); len]).collect();
        let mut k = 0;
        while k + 1 < values.len() {
            let (lo, hi) = out.split_at_mut(k + 1);
            self.pair_to_spectral(values[k], values[k + 1], &mut lo[k], &mut hi[0], keep);
            k += 2;
        }
        if k < values.len() {
            self.scalar_to_spectral(values[k], &mut out[k]);
        }
        out
    }

    pub fn to_physical(&mut self, field: &SpectralField) -> PhysicalField {
        let mut out = PhysicalField::zeros(self.lattice.len());
        let [c0, c1, c2] = &mut out.comps;
        self.pair_to_physical(field.component(0), field.component(1), c0, c1);
        self.scalar_to_physical(field.component(2), c2);
        out
    }

    /// Forward transform of a real field. Mean and Nyquist content are dropped.
    pub fn to_spectral(&mut self, field: &PhysicalField) -> SpectralField {
        let [a, b, c] = &field.comps;
        let hat = self.many_to_spectral(&[a, b, c], None);
        let comps: [Vec<Complex64>; 3] = hat.try_into().expect("three components");
        SpectralField::from_components(&self.lattice, comps).expect("lattice-sized buffers")
    }

    /// `P ∇·T` for a symmetric tensor given by its six upper-triangular
    /// physical components `[11, 12, 13, 22, 23, 33]`, with the 2/3 mask applied.
    pub fn projected_divergence_sym(&mut self, tensor: &[Vec<f64>; 6]) -> SpectralField {
        const IDX: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
        let refs: Vec<&Vec<f64>> = tensor.iter().collect();
        let mask = self.lattice.clone();
        let mask = mask.dealias_mask();
        let hat = self.many_to_spectral(&refs, Some(mask));
        self.assemble_divergence(|m, j| &hat[IDX[m][j]])
    }

    /// `P ∇·T` for a general tensor `T[m][j]` (divergence over `m`), 2/3-masked.
    pub fn projected_divergence(&mut self, tensor: &[[Vec<f64>; 3]; 3]) -> SpectralField {
        let refs: Vec<&Vec<f64>> = tensor.iter().flatten().collect();
        let mask = self.lattice.clone();
        let mask = mask.dealias_mask();
        let hat = self.many_to_spectral(&refs, Some(mask));
        self.assemble_divergence(|m, j| &hat[3 * m + j])
    }

    fn assemble_divergence<'a>(
        &self,
        hat: impl Fn(usize, usize) -> &'a Vec<Complex64>,
    ) -> SpectralField {
        let lat = &self.lattice;
        let len = lat.len();
        let mut comps = [
            vec![Complex64::new(0.0, 0.0); len],
            vec![Complex64::new(0.0, 0.0); len],
            vec![Complex64::new(0.0, 0.0); len],
        ];
        for idx in 0..len {
            let k2 = lat.k2()[idx];
            if !lat.dealias_mask()[idx] || !lat.active()[idx] || k2 == 0.0 {
                continue;
            }
            let w = lat.wavevector(idx);
            let mut d = [Complex64::new(0.0, 0.0); 3];
            for (j, dj) in d.iter_mut().enumerate() {
                for (m, &wm) in w.iter().enumerate() {
                    *dj += hat(m, j)[idx] * Complex64::new(0.0, wm as f64);
                }
            }
            let (n1, n2, n3) = (w[0] as f64, w[1] as f64, w[2] as f64);
            let dot = (d[0] * n1 + d[1] * n2 + d[2] * n3) / k2;
            comps[0][idx] = d[0] - dot * n1;
            comps[1][idx] = d[1] - dot * n2;
            comps[2][idx] = d[2] - dot * n3;
        }
        SpectralField::from_projected(lat, comps)
    }

    /// Divergence form `P ∇·(u ⊗ w)`; requires `∇·u = 0`.
    pub fn advective_term(
        &mut self,
        u: &SpectralField,
        w: &SpectralField,
    ) -> Result<SpectralField, SpectralError> {
        u.check_lattice(w)?;
        let div = u.divergence_residual();
        if div > super::DIVERGENCE_TOL {
            return Err(SpectralError::NotSolenoidal(div));
        }
        if u.is_zero() || w.is_zero() {
            return Ok(SpectralField::zeros(&self.lattice));
        }
        let up = self.to_physical(u);
        let wp = self.to_physical(w);
        let tensor: [[Vec<f64>; 3]; 3] = std::array::from_fn(|m| {
            std::array::from_fn(|j| {
                up.comps[m].iter().zip(&wp.comps[j]).map(|(a, b)| a * b).collect()
            })
        });
        Ok(self.projected_divergence(&tensor))
    }

    /// Convective form `P((u·∇) w)`, computed from spectral gradients of `w`.
    pub fn convective_term(
        &mut self,
        u: &SpectralField,
        w: &SpectralField,
    ) -> Result<SpectralField, SpectralError> {
        u.check_lattice(w)?;
        let lat = self.lattice.clone();
        let len = lat.len();
        let up = self.to_physical(u);
        let mut out = PhysicalField::zeros(len);
        let mut grad = vec![Complex64::new(0.0, 0.0); len];
        let mut dphys = vec![0.0; len];
        for j in 0..3 {
            for m in 0..3 {
                let wj = w.component(j);
                for idx in 0..len {
                    let nm = lat.wavevector(idx)[m] as f64;
                    grad[idx] = wj[idx] * Complex64::new(0.0, nm);
                }
                self.scalar_to_physical(&grad, &mut dphys);
                for ((o, a), d) in out.comps[j].iter_mut().zip(&up.comps[m]).zip(&dphys) {
                    *o += a * d;
                }
            }
        }
        let mask = lat.dealias_mask();
        let spec = self.to_spectral(&out);
        Ok(spec.restrict(|idx| mask[idx]).leray_project())
    }
}
