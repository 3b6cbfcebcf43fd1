//! Fourier-side norms, the `f_s` series, critical thresholds and the
//! Lyapunov/decay audits for height trajectories.
//!
//! Norms use integer wavenumbers with weight `|k|^s` (not `|2πk|^s`) and
//! always exclude the zero mode:
//! `‖h‖_s = Σ_{k≠0} |k|^s |ĥ_k|`. Thresholds such as `‖h₀‖_2 < y*` are
//! therefore statements in this convention; passing to `2πk` rescales every
//! norm by `(2π)^s`.
//!
//! The Lyapunov and decay audits are the exception. Their inequalities bound
//! `e^{-Δh}` through the norm of `Δh`, whose symbol on `[0, 1)` is `(2πk)²`,
//! so they weigh modes by `|2πk|^s` ([`DERIVATIVE_UNIT`]).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::continuum::HRun;
use crate::fft::{wavenumber, Fourier};
use crate::{Error, GridField, Result};

/// Fourier coefficients of a real field, indexed by FFT slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProfile {
    coeffs: Vec<Complex64>,
}

impl SpectralProfile {
    pub fn from_field(field: &GridField) -> Self {
        Self { coeffs: Fourier::for_field(field).forward(field.values()) }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient of wavenumber `k ∈ [-N/2, N/2)`.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let n = self.coeffs.len() as i64;
        self.coeffs[k.rem_euclid(n) as usize]
    }

    /// `(k, |ĥ_k|)` for every slot.
    pub fn magnitudes(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let n = self.coeffs.len();
        self.coeffs.iter().enumerate().map(move |(j, c)| (wavenumber(j, n), c.norm()))
    }

    /// Largest `|ĥ_k - conj(ĥ_{-k})|` over the paired modes.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let n = self.coeffs.len() as i64;
        (1..n / 2).map(|k| (self.coeff(k) - self.coeff(-k).conj()).norm()).fold(0.0, f64::max)
    }

    pub fn s_norm(&self, s: f64) -> f64 {
        self.scaled_norm(s, 1.0)
    }

    /// `Σ_{k≠0} |unit·k|^s |ĥ_k|`.
    pub fn scaled_norm(&self, s: f64, unit: f64) -> f64 {
        self.magnitudes().filter(|&(k, _)| k != 0).map(|(k, m)| (unit * k.unsigned_abs() as f64).powf(s) * m).sum()
    }

    /// Supremum over dyadic shells `2^{j-1} ≤ |k| < 2^j` of the weighted
    /// shell sums.
    pub fn besov_norm(&self, s: f64) -> f64 {
        let mut shells = vec![0.0; 66];
        for (k, m) in self.magnitudes().filter(|&(k, _)| k != 0) {
            let a = k.unsigned_abs();
            let shell = (64 - a.leading_zeros()) as usize;
            shells[shell] += (a as f64).powf(s) * m;
        }
        shells.into_iter().fold(0.0, f64::max)
    }
}

/// Fraction of the initial `‖h‖_s` below which the Lyapunov audit stops.
pub const RESOLVED_FRACTION: f64 = 1e-6;

/// Wavenumber unit of the audits: `ξ = 2πk` matches derivatives on `[0, 1)`.
pub const DERIVATIVE_UNIT: f64 = std::f64::consts::TAU;

/// Homogeneous Wiener-type norm `Σ_{k≠0} |k|^s |ĥ_k|`.
pub fn s_norm(field: &GridField, s: f64) -> f64 {
    SpectralProfile::from_field(field).s_norm(s)
}

/// Dyadic-shell (Besov-type) version of [`s_norm`]; never larger.
pub fn besov_norm(field: &GridField, s: f64) -> f64 {
    SpectralProfile::from_field(field).besov_norm(s)
}

/// `f_s(y) = Σ_{j≥1} (j+1)^{s+1} y^j / j!`, summed until the geometric
/// tail bound (term ratios decrease monotonically past the peak) falls
/// below `tol`.
pub fn f_s_series(y: f64, s: f64, tol: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut power = 1.0; // y^j / j!
    for j in 1..100_000u32 {
        let jf = j as f64;
        power *= y / jf;
        let term = (jf + 1.0).powf(s + 1.0) * power;
        // Neumaier summation
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        let ratio = ((jf + 2.0) / (jf + 1.0)).powf(s + 1.0) * y / (jf + 1.0);
        if ratio < 1.0 && term * ratio / (1.0 - ratio) <= tol {
            break;
        }
    }
    sum + comp
}

/// Default series tolerance: far below double rounding of `f_s` near 1.
pub const SERIES_TOL: f64 = 1e-18;

/// `f_2(y) = (y³ + 6y² + 7y + 1)e^y - 1`.
pub fn f2_closed(y: f64) -> f64 {
    (((y + 6.0) * y + 7.0) * y + 1.0) * y.exp() - 1.0
}

/// `f_{-1}(y) = e^y - 1`.
pub fn f_minus1_closed(y: f64) -> f64 {
    y.exp_m1()
}

/// The root `y_{s*}` of `f_s(y) = 1`, by bisection.
pub fn critical_threshold(s: f64) -> Result<f64> {
    if !(s >= -1.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("threshold needs s >= -1, got {s}")));
    }
    let f = |y: f64| f_s_series(y, s, SERIES_TOL);
    let mut hi = 1.0;
    while f(hi) < 1.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = if (f(lo) - 1.0).abs() <= (f(hi) - 1.0).abs() { lo } else { hi };
    Ok(y)
}

/// `σ_{s,1} = 1 - f_s(‖h₀‖_2)`.
pub fn sigma_s1(h0_norm2: f64, s: f64) -> f64 {
    1.0 - f_s_series(h0_norm2, s, SERIES_TOL)
}

/// Left and right sides of
/// `Σ_k |k|^s (a^{*j})_k ≤ j^s ‖h‖_{s+2} ‖h‖_2^{j-1}`, where
/// `a_k = |k|² |ĥ_k|` and the `j`-fold convolution runs over all of `ℤ`.
pub fn convolution_bound(field: &GridField, j: usize, s: f64) -> (f64, f64) {
    let profile = SpectralProfile::from_field(field);
    let half = (profile.len() / 2) as i64;
    // Dense representation on [-half, half) with offset `half`.
    let base: Vec<f64> = (-half..half).map(|k| (k * k) as f64 * profile.coeff(k).norm()).collect();
    let mut conv = base.clone();
    let mut offset = half;
    for _ in 1..j.max(1) {
        let mut next = vec![0.0; conv.len() + base.len() - 1];
        for (a, &x) in conv.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (b, &y) in base.iter().enumerate() {
                next[a + b] += x * y;
            }
        }
        conv = next;
        offset += half;
    }
    let lhs = conv.iter().enumerate().map(|(i, &v)| ((i as i64 - offset).unsigned_abs() as f64).powf(s) * v).sum();
    let rhs = (j as f64).powf(s) * profile.s_norm(s + 2.0) * profile.s_norm(2.0).powi(j as i32 - 1);
    (lhs, rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub s: f64,
    /// False when `‖h₀‖_2` violates the smallness condition; the checks
    /// below are then informational only.
    pub binding: bool,
    pub sigma: f64,
    pub threshold: f64,
    pub h0_norm2: f64,
    /// `‖h‖_s` at each sample.
    pub norm_s: Vec<f64>,
    pub norm_2: Vec<f64>,
    /// Largest `Δ‖h‖_s + σ ∫ (‖h‖_{s+4} + ‖h‖_{s+2}) dt` over consecutive
    /// samples (trapezoid rule); non-positive when the inequality holds.
    pub worst_slack: f64,
    pub tolerance: f64,
    /// End of the last audited interval.
    pub horizon: f64,
    pub inequality_holds: bool,
    /// `‖h‖_2` decreases between every pair of samples until it reaches
    /// `1e-12 ‖h₀‖_2`.
    pub norm2_nonincreasing: bool,
}

/// Integrated check of `d/dt ‖h‖_s + σ_{s,1}(‖h‖_{s+4} + ‖h‖_{s+2}) ≤ 0`
/// between consecutive samples of `run`, with norms in the `2πk` convention.
///
/// Solver roundoff in `e^{-Δh}` leaves every mode with noise of order
/// `ε(2πk)²`, which the `s+4` weight turns into dissipation of about
/// `1e-8` relative to the initial one. Intervals starting after `‖h‖_s`
/// has fallen below [`RESOLVED_FRACTION`] of its initial value are
/// therefore not audited; `horizon` reports where the audit stopped.
pub fn lyapunov_audit(run: &HRun, s: f64) -> Result<LyapunovReport> {
    if run.states.is_empty() {
        return Err(Error::InvalidParameter("empty trajectory".into()));
    }
    let unit = DERIVATIVE_UNIT;
    let profiles: Vec<SpectralProfile> = run.states.iter().map(SpectralProfile::from_field).collect();
    let norm = |s: f64| -> Vec<f64> { profiles.iter().map(|p| p.scaled_norm(s, unit)).collect() };
    let norm_s = norm(s);
    let norm_2 = norm(2.0);
    let dissipation: Vec<f64> = norm(s + 4.0).iter().zip(norm(s + 2.0)).map(|(a, b)| a + b).collect();
    let h0_norm2 = norm_2[0];
    let threshold = critical_threshold(s)?.min(critical_threshold(2.0)?);
    let binding = h0_norm2 < threshold;
    let sigma = sigma_s1(h0_norm2, s);

    let tolerance = 1e-12 * norm_s[0].max(f64::MIN_POSITIVE);
    let resolved = RESOLVED_FRACTION * norm_s[0];
    let floor = 1e-12 * h0_norm2;
    let mut horizon = run.times[0];
    let mut worst = f64::NEG_INFINITY;
    let mut monotone = true;
    for i in 1..run.times.len() {
        if norm_s[i - 1] >= resolved {
            let dt = run.times[i] - run.times[i - 1];
            let slack = norm_s[i] - norm_s[i - 1] + sigma * 0.5 * dt * (dissipation[i] + dissipation[i - 1]);
            worst = worst.max(slack);
            horizon = run.times[i];
        }
        if !(norm_2[i] < norm_2[i - 1] || norm_2[i] <= floor) {
            monotone = false;
        }
    }
    Ok(LyapunovReport {
        s,
        binding,
        sigma,
        threshold,
        h0_norm2,
        norm_s,
        norm_2,
        worst_slack: if worst.is_finite() { worst } else { 0.0 },
        tolerance,
        horizon,
        inequality_holds: worst <= tolerance,
        norm2_nonincreasing: monotone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub s1: f64,
    pub s2: f64,
    /// `(s2 - s1)/2`.
    pub exponent: f64,
    /// Smallest `C` with `‖h(t)‖_{s2} ≤ C (1+t)^{-exponent}` at every sample.
    pub constant: f64,
    pub initial_norm: f64,
    pub envelope_holds: bool,
}

/// Fits, in the `2πk` convention, the algebraic decay envelope `‖h‖_{s2} ≤ C (1+t)^{-(s2-s1)/2}`.
pub fn decay_audit(run: &HRun, s1: f64, s2: f64) -> Result<DecayReport> {
    if !(s1 >= -1.0 && s2 >= s1) {
        return Err(Error::InvalidParameter(format!("decay audit needs s2 >= s1 >= -1, got s1={s1}, s2={s2}")));
    }
    if run.states.is_empty() {
        return Err(Error::InvalidParameter("empty trajectory".into()));
    }
    let exponent = 0.5 * (s2 - s1);
    let scaled = |h: &GridField, s: f64| SpectralProfile::from_field(h).scaled_norm(s, DERIVATIVE_UNIT);
    let norms: Vec<f64> = run.states.iter().map(|h| scaled(h, s2)).collect();
    let initial_s1 = scaled(&run.states[0], s1);
    if !(initial_s1.is_finite() && norms[0].is_finite()) {
        return Err(Error::InvalidParameter("initial norms must be finite".into()));
    }
    let constant = run.times.iter().zip(&norms).map(|(t, n)| n * (1.0 + t).powf(exponent)).fold(0.0, f64::max);
    let envelope_holds = constant.is_finite()
        && run.times.iter().zip(&norms).all(|(t, n)| *n <= constant * (1.0 + t).powf(-exponent) * (1.0 + 1e-12));
    Ok(DecayReport { s1, s2, exponent, constant, initial_norm: norms[0], envelope_holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn norm_examples() {
        let zero = GridField::constant(32, 0.0).unwrap();
        assert_eq!(s_norm(&zero, 2.0), 0.0);
        assert_eq!(besov_norm(&zero, 2.0), 0.0);
        let a = 0.37;
        let h = GridField::from_fn(64, |x| a * (2.0 * PI * x).cos()).unwrap();
        for s in [-0.5, 0.0, 2.0] {
            assert!((s_norm(&h, s) - a).abs() < 1e-12, "s={s} {}", s_norm(&h, s));
            assert!((besov_norm(&h, s) - a).abs() < 1e-12);
        }
        // High weights amplify transform roundoff in the empty modes.
        assert!((s_norm(&h, 6.0) - a).abs() < 1e-6);
        let scaled = h.map(|v| -3.0 * v);
        assert!((s_norm(&scaled, 2.0) - 3.0 * s_norm(&h, 2.0)).abs() < 1e-12);
    }

    #[test]
    fn besov_never_exceeds_s_norm() {
        let h = GridField::from_fn(64, |x| (2.0 * PI * x).sin() + 0.3 * (10.0 * PI * x).cos() - 0.1 * (40.0 * PI * x).sin())
            .unwrap();
        for s in [0.0, 1.0, 2.5] {
            assert!(besov_norm(&h, s) <= s_norm(&h, s));
        }
    }

    #[test]
    fn parseval_for_zero_weight_l2() {
        let h = GridField::from_fn(128, |x| (2.0 * PI * x).sin() * (0.3 + (6.0 * PI * x).cos())).unwrap();
        let p = SpectralProfile::from_field(&h);
        let spectral: f64 = p.magnitudes().map(|(_, m)| m * m).sum();
        assert!((spectral.sqrt() - h.l2_norm()).abs() < 1e-12);
        assert!(p.conjugate_asymmetry() < 1e-12);
    }

    #[test]
    fn series_examples() {
        assert_eq!(f_s_series(0.0, 2.0, SERIES_TOL), 0.0);
        assert!((f_s_series(1.0, -1.0, SERIES_TOL) - (std::f64::consts::E - 1.0)).abs() < 1e-14);
        assert!((f_s_series(1.0, 2.0, SERIES_TOL) - (15.0 * std::f64::consts::E - 1.0)).abs() < 1e-12);
        assert!((f2_closed(1.0) - 39.774_227).abs() < 1e-6);
    }

    #[test]
    fn threshold_examples() {
        assert!((critical_threshold(-1.0).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!(critical_threshold(-1.5).is_err());
        let y = critical_threshold(2.0).unwrap();
        assert!((y - 0.1048).abs() < 1e-4);
        assert!((f2_closed(y) - 1.0).abs() < 1e-12);
        assert!(critical_threshold(0.0).unwrap() >= y);
    }

    #[test]
    fn convolution_bound_spot_check() {
        let h = GridField::from_fn(32, |x| 0.2 * (2.0 * PI * x).cos() + 0.05 * (6.0 * PI * x).sin()).unwrap();
        for j in [2, 3] {
            for s in [1.0, 2.0, 4.0] {
                let (lhs, rhs) = convolution_bound(&h, j, s);
                assert!(lhs <= rhs * (1.0 + 1e-12), "j={j} s={s}: {lhs} > {rhs}");
            }
        }
    }
}
