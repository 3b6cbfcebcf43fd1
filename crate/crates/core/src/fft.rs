//! Pseudo-spectral machinery on the periodic grid.
//!
//! Convention: for samples `f_j = f(x_j)`, `x_j = j L / N`, the coefficient
//! of the mode `exp(2πi k x / L)` is `f̂_k = (1/N) Σ_j f_j exp(-2πi k j / N)`
//! with integer wavenumbers `k ∈ [-N/2, N/2)`. With this normalisation the
//! coefficients are those of the L²(𝕋)-orthonormal Fourier basis on the unit
//! torus and `Σ |f̂_k|² = (1/L) ∫ f² dx`.

use std::f64::consts::PI;
use std::sync::{Arc, LazyLock, Mutex};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::GridField;

static PLANNER: LazyLock<Mutex<FftPlanner<f64>>> = LazyLock::new(|| Mutex::new(FftPlanner::new()));

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = PLANNER.lock().unwrap_or_else(|e| e.into_inner());
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

/// Integer wavenumber stored at FFT slot `j`.
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Forward/inverse transforms and Fourier multipliers for one grid size.
///
/// Owns its scratch buffers; create one per solver (plans themselves are
/// shared through a process-wide cache).
pub struct Fourier {
    n: usize,
    length: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    coeffs: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("n", &self.n).field("length", &self.length).finish()
    }
}

impl Clone for Fourier {
    fn clone(&self) -> Self {
        Self::with_length(self.n, self.length)
    }
}

impl Fourier {
    pub fn new(n: usize) -> Self {
        Self::with_length(n, 1.0)
    }

    pub fn with_length(n: usize, length: f64) -> Self {
        let (fwd, inv) = plans(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            n,
            length,
            fwd,
            inv,
            buf: vec![Complex64::default(); n],
            coeffs: vec![Complex64::default(); n],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn for_field(field: &GridField) -> Self {
        Self::with_length(field.len(), field.domain_length())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Angular wavenumber `2πk/L` for slot `j`.
    pub fn angular(&self, j: usize) -> f64 {
        2.0 * PI * wavenumber(j, self.n) as f64 / self.length
    }

    pub fn forward_into(&mut self, values: &[f64], out: &mut [Complex64]) {
        debug_assert_eq!(values.len(), self.n);
        let scale = 1.0 / self.n as f64;
        for (o, &v) in out.iter_mut().zip(values) {
            *o = Complex64::new(v, 0.0);
        }
        self.fwd.process_with_scratch(out, &mut self.scratch);
        for o in out.iter_mut() {
            *o *= scale;
        }
    }

    pub fn forward(&mut self, values: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.n];
        self.forward_into(values, &mut out);
        out
    }

    /// Inverse transform keeping the real part.
    pub fn inverse_into(&mut self, coeffs: &[Complex64], out: &mut [f64]) {
        self.buf.copy_from_slice(coeffs);
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (o, c) in out.iter_mut().zip(&self.buf) {
            *o = c.re;
        }
    }

    pub fn inverse(&mut self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.inverse_into(coeffs, &mut out);
        out
    }

    /// Applies a real even multiplier `symbol(ξ)`, `ξ = 2πk/L`, to `values`.
    pub fn apply_real_symbol(&mut self, values: &[f64], out: &mut [f64], symbol: impl Fn(f64) -> f64) {
        let mut coeffs = std::mem::take(&mut self.coeffs);
        self.forward_into(values, &mut coeffs);
        for (j, c) in coeffs.iter_mut().enumerate() {
            *c *= symbol(self.angular(j));
        }
        self.inverse_into(&coeffs, out);
        self.coeffs = coeffs;
    }

    /// Multiplies the coefficient in slot `j` by `multipliers[j]`.
    pub fn apply_multipliers(&mut self, values: &[f64], out: &mut [f64], multipliers: &[f64]) {
        debug_assert_eq!(multipliers.len(), self.n);
        let mut coeffs = std::mem::take(&mut self.coeffs);
        self.forward_into(values, &mut coeffs);
        for (c, &m) in coeffs.iter_mut().zip(multipliers) {
            *c *= m;
        }
        self.inverse_into(&coeffs, out);
        self.coeffs = coeffs;
    }

    /// `d^order f / dx^order`. The Nyquist mode is dropped for odd orders.
    pub fn derivative(&mut self, values: &[f64], order: u32) -> Vec<f64> {
        let mut coeffs = self.forward(values);
        let nyquist = self.n / 2;
        for (j, c) in coeffs.iter_mut().enumerate() {
            if order % 2 == 1 && j == nyquist {
                *c = Complex64::default();
                continue;
            }
            *c *= Complex64::new(0.0, self.angular(j)).powu(order);
        }
        self.inverse(&coeffs)
    }

    pub fn laplacian(&mut self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_real_symbol(values, &mut out, |xi| -xi * xi);
        out
    }
}
