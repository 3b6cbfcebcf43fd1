//! Mesoscale ODE system for box-averaged heights:
//!
//! `dh_k/dt = a [e_{k-1} - 2 e_k + e_{k+1}] + C (1 - e_k)`, `e_k = exp(β μ_k)`,
//!
//! with the chemical potential `μ_k = -2 (Δ_N h)_k`.
//!
//! With the default grid scaling of `Δ_N`, the choice `a = N²`, `β = ½`,
//! `C = 1` reproduces `h_t = Δ e^{-Δh} + (1 - e^{-Δh})` as `N → ∞`.

use serde::{Deserialize, Serialize};

use crate::ode::{integrate, Dopri5Options};
use crate::statmech::LaplacianScale;
use crate::{Error, GridField, Result};

/// Largest admissible exponent `β μ_k`.
pub const EXP_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MesoParams {
    /// Prefactor `a` of the discrete Laplacian of `e^{βμ}`.
    pub hop_coef: f64,
    /// Deposition/evaporation coefficient `C`.
    pub dep_coef: f64,
    pub beta: f64,
    pub n: usize,
    #[serde(default)]
    pub laplacian: LaplacianScale,
}

impl MesoParams {
    /// Parameters whose large-`N` limit is the unit-coefficient continuum
    /// equation.
    pub fn continuum_matched(n: usize) -> Self {
        Self { hop_coef: (n * n) as f64, dep_coef: 1.0, beta: 0.5, n, laplacian: LaplacianScale::Grid }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hop_coef.is_finite() && self.hop_coef > 0.0) {
            return Err(Error::InvalidParameter(format!("hop_coef must be finite and > 0, got {}", self.hop_coef)));
        }
        if !(self.dep_coef.is_finite() && self.dep_coef >= 0.0) {
            return Err(Error::InvalidParameter(format!("dep_coef must be finite and >= 0, got {}", self.dep_coef)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be finite and > 0, got {}", self.beta)));
        }
        if self.n < 4 {
            return Err(Error::InvalidParameter(format!("n must be >= 4, got {}", self.n)));
        }
        Ok(())
    }
}

fn rhs_into(h: &[f64], spacing: f64, params: &MesoParams, e: &mut [f64], out: &mut [f64]) -> Result<()> {
    let n = h.len();
    let inv = match params.laplacian {
        LaplacianScale::Grid => 1.0 / (spacing * spacing),
        LaplacianScale::Lattice => 1.0,
    };
    for k in 0..n {
        let lap = (h[(k + 1) % n] - 2.0 * h[k] + h[(k + n - 1) % n]) * inv;
        let exponent = -2.0 * params.beta * lap;
        if !(exponent <= EXP_GUARD) {
            return Err(Error::Overflow { index: k, value: exponent });
        }
        e[k] = exponent.exp();
    }
    for k in 0..n {
        out[k] = params.hop_coef * (e[(k + n - 1) % n] - 2.0 * e[k] + e[(k + 1) % n]) + params.dep_coef * (1.0 - e[k]);
    }
    Ok(())
}

/// Right-hand side of the mesoscale system.
pub fn smereka_rhs(h: &GridField, params: &MesoParams) -> Result<GridField> {
    params.validate()?;
    if h.len() != params.n {
        return Err(Error::GridMismatch(format!("field has {} nodes, parameters say {}", h.len(), params.n)));
    }
    let mut e = vec![0.0; h.len()];
    let mut out = vec![0.0; h.len()];
    rhs_into(h.values(), h.spacing(), params, &mut e, &mut out)?;
    Ok(GridField::from_parts_unchecked(out, h.spacing()))
}

/// First-order expansion of [`smereka_rhs`] about a flat state:
/// `-2β a s Δ_N² h + 2β C Δ_N h`, with `s = Δx²` under grid scaling and 1
/// in lattice units.
pub fn linearized_rhs(h: &GridField, params: &MesoParams) -> GridField {
    let lap = crate::statmech::discrete_laplacian(h, params.laplacian);
    let bilap = crate::statmech::discrete_laplacian(&lap, params.laplacian);
    let s = match params.laplacian {
        LaplacianScale::Grid => h.spacing() * h.spacing(),
        LaplacianScale::Lattice => 1.0,
    };
    let two_beta = 2.0 * params.beta;
    let vals = bilap
        .values()
        .iter()
        .zip(lap.values())
        .map(|(b, l)| -two_beta * params.hop_coef * s * b + two_beta * params.dep_coef * l)
        .collect();
    GridField::from_parts_unchecked(vals, h.spacing())
}

/// Linear decay rate of the discrete Fourier mode `k` (for the linearised
/// system about a flat state).
pub fn linear_mode_rate(k: i64, params: &MesoParams, spacing: f64) -> f64 {
    let theta = std::f64::consts::PI * k as f64 / params.n as f64;
    let s = match params.laplacian {
        LaplacianScale::Grid => spacing * spacing,
        LaplacianScale::Lattice => 1.0,
    };
    let lambda = 4.0 * theta.sin().powi(2) / s;
    2.0 * params.beta * (params.hop_coef * s * lambda * lambda + params.dep_coef * lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MesoTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GridField>,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
}

/// Integrates the system with the embedded Dormand–Prince pair at
/// tolerance `tol` (relative and absolute), recording `t = 0`, each sample
/// time below `t_final`, and `t_final`.
pub fn integrate_meso(
    h0: &GridField,
    params: &MesoParams,
    t_final: f64,
    tol: f64,
    sample_times: &[f64],
) -> Result<MesoTrajectory> {
    params.validate()?;
    if h0.len() != params.n {
        return Err(Error::GridMismatch(format!("field has {} nodes, parameters say {}", h0.len(), params.n)));
    }
    if !(t_final > 0.0) {
        return Err(Error::InvalidParameter(format!("t_final must be > 0, got {t_final}")));
    }
    let spacing = h0.spacing();
    let mut e = vec![0.0; h0.len()];
    let sol = integrate(
        |_, y, dy| rhs_into(y, spacing, params, &mut e, dy),
        0.0,
        h0.values(),
        t_final,
        sample_times,
        &Dopri5Options::with_tolerance(tol),
    )?;
    Ok(MesoTrajectory {
        times: sol.times,
        states: sol.states.into_iter().map(|v| GridField::from_parts_unchecked(v, spacing)).collect(),
        accepted_steps: sol.accepted,
        rejected_steps: sol.rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn lattice(n: usize, a: f64, c: f64, beta: f64) -> MesoParams {
        MesoParams { hop_coef: a, dep_coef: c, beta, n, laplacian: LaplacianScale::Lattice }
    }

    #[test]
    fn flat_is_fixed() {
        let h = GridField::constant(16, 3.0).unwrap();
        let r = smereka_rhs(&h, &MesoParams::continuum_matched(16)).unwrap();
        assert!(r.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conservative_without_deposition() {
        let h = GridField::from_fn(32, |x| 0.01 * (2.0 * PI * x).sin() + 0.003 * (6.0 * PI * x).cos()).unwrap();
        let mut p = MesoParams::continuum_matched(32);
        p.dep_coef = 0.0;
        let r = smereka_rhs(&h, &p).unwrap();
        let scale = r.max_abs();
        assert!(r.values().iter().sum::<f64>().abs() < 1e-13 * scale * 32.0);
    }

    #[test]
    fn small_amplitude_matches_linearisation() {
        for p in [lattice(64, 0.7, 0.3, 1.3), MesoParams::continuum_matched(64)] {
            let h = GridField::from_fn(64, |x| 1e-6 * (2.0 * PI * x).sin()).unwrap();
            let r = smereka_rhs(&h, &p).unwrap();
            let lin = linearized_rhs(&h, &p);
            let diff = r.l2_distance(&lin).unwrap();
            assert!(diff <= 1e-4 * lin.l2_norm(), "{diff} vs {}", lin.l2_norm());
        }
    }

    #[test]
    fn overflow_is_flagged() {
        let mut v = vec![0.0; 8];
        v[3] = 500.0;
        let h = GridField::with_spacing(v, 1.0).unwrap();
        assert!(matches!(smereka_rhs(&h, &lattice(8, 1.0, 1.0, 1.0)), Err(Error::Overflow { index: 3, .. })));
    }

    #[test]
    fn sine_decays_at_linear_rate() {
        let n = 32;
        let p = MesoParams::continuum_matched(n);
        let amp = 1e-7;
        let h0 = GridField::from_fn(n, |x| amp * (2.0 * PI * x).sin()).unwrap();
        let rate = linear_mode_rate(1, &p, h0.spacing());
        let t = 0.5 / rate;
        let traj = integrate_meso(&h0, &p, t, 1e-12, &[]).unwrap();
        let end = traj.states.last().unwrap();
        let observed = -(end.max_abs() / h0.max_abs()).ln() / t;
        assert!((observed / rate - 1.0).abs() < 0.05, "{observed} vs {rate}");
    }

    #[test]
    fn mass_conserved_when_conservative() {
        let n = 16;
        let mut p = MesoParams::continuum_matched(n);
        p.dep_coef = 0.0;
        let h0 = GridField::from_fn(n, |x| 1.0 + 0.01 * (2.0 * PI * x).cos()).unwrap();
        let traj = integrate_meso(&h0, &p, 1e-4, 1e-10, &[5e-5]).unwrap();
        assert_eq!(traj.times, vec![0.0, 5e-5, 1e-4]);
        let m0: f64 = h0.values().iter().sum();
        for s in &traj.states {
            let m: f64 = s.values().iter().sum();
            assert!((m - m0).abs() <= 1e-10 * m0.abs());
        }
    }
}
