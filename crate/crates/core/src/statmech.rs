//! Tilted Gibbs ensemble over integer slopes and its Legendre transform.
//!
//! The tilted measure is `w(z) = exp(-β V(z) + η z) / Z_η` on `z ∈ ℤ`. All
//! sums are taken in log space around the dominant term, so tilts of order
//! `10³` are handled without overflow.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::Potential;
use crate::{Error, GridField, Result};

/// Relative size of the certified tail bound at which summation stops.
const TAIL_TOL: f64 = 1e-17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedEnsemble {
    pub beta: f64,
    pub eta: f64,
    pub potential: Potential,
}

/// Log partition function and the first two moments of the tilted measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub log_z: f64,
    pub mean: f64,
    pub variance: f64,
    /// Number of terms actually summed.
    pub terms: usize,
}

impl TiltedEnsemble {
    /// `p` is the potential exponent (1 or 2).
    pub fn new(beta: f64, eta: f64, p: u8) -> Result<Self> {
        let potential = Potential::try_from(p).map_err(Error::InvalidParameter)?;
        Self::with_potential(beta, eta, potential)
    }

    pub fn with_potential(beta: f64, eta: f64, potential: Potential) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0 && eta.is_finite()) {
            return Err(Error::Divergent { eta, beta });
        }
        if potential == Potential::Linear && eta.abs() >= beta {
            return Err(Error::Divergent { eta, beta });
        }
        Ok(Self { beta, eta, potential })
    }

    fn log_weight(&self, z: i64) -> f64 {
        let zf = z as f64;
        -self.beta * self.potential.eval(zf) + self.eta * zf
    }

    /// Integer maximising the weight.
    fn mode(&self) -> i64 {
        match self.potential {
            Potential::Quadratic => (self.eta / (2.0 * self.beta)).round() as i64,
            Potential::Linear => 0,
        }
    }

    /// Walks outward from the mode, calling `visit(d, w_up, w_down)` with the
    /// relative weights `exp(log_weight(mode ± d) - log_weight(mode))`.
    /// Each side stops once its geometric tail bound `w·r/(1-r)` (with `r`
    /// the current term ratio, non-increasing beyond the mode for both
    /// potentials) is negligible against the running sum; a finished side
    /// reports zero. Pairing the two sides makes odd moments of a symmetric
    /// measure vanish exactly.
    fn sweep(&self, mut visit: impl FnMut(i64, f64, f64)) -> usize {
        let z0 = self.mode();
        let lw0 = self.log_weight(z0);
        visit(0, 1.0, 0.0);
        let mut total = 1.0;
        let mut terms = 1;
        let mut prev = [1.0f64; 2];
        let mut live = [true; 2];
        let mut d = 0;
        while live[0] || live[1] {
            d += 1;
            let mut w = [0.0; 2];
            for (side, sign) in [(0usize, 1i64), (1, -1)] {
                if !live[side] {
                    continue;
                }
                let wi = (self.log_weight(z0 + sign * d) - lw0).exp();
                w[side] = wi;
                total += wi;
                terms += 1;
                let r = wi / prev[side];
                prev[side] = wi;
                if wi == 0.0 || (r < 1.0 && wi * r / (1.0 - r) <= TAIL_TOL * total) {
                    live[side] = false;
                }
            }
            visit(d, w[0], w[1]);
        }
        terms
    }

    pub fn moments(&self) -> Moments {
        let z0 = self.mode();
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let terms = self.sweep(|d, up, down| {
            let d = d as f64;
            s0 += up + down;
            s1 += d * (up - down);
            s2 += d * d * (up + down);
        });
        let shift = s1 / s0;
        Moments {
            log_z: self.log_weight(z0) + s0.ln(),
            mean: z0 as f64 + shift,
            variance: (s2 / s0 - shift * shift).max(0.0),
            terms,
        }
    }

    /// `log Z_η`.
    pub fn log_partition(&self) -> f64 {
        self.moments().log_z
    }

    /// `Z_η`; may overflow to infinity for very large tilts, use
    /// [`log_partition`](Self::log_partition) there.
    pub fn partition_function(&self) -> f64 {
        self.log_partition().exp()
    }

    /// Mean slope `d log Z_η / dη`.
    pub fn tilt_mean(&self) -> f64 {
        self.moments().mean
    }

    /// Draws one slope by inverse transform over the summed support.
    pub fn sample(&self, rng: &mut impl Rng) -> i64 {
        let z0 = self.mode();
        let mut support = Vec::new();
        self.sweep(|d, up, down| {
            support.push((z0 + d, up));
            if d > 0 {
                support.push((z0 - d, down));
            }
        });
        support.sort_unstable_by_key(|&(z, _)| z);
        let total: f64 = support.iter().map(|&(_, w)| w).sum();
        let mut target = rng.random::<f64>() * total;
        for &(z, w) in &support {
            if target < w {
                return z;
            }
            target -= w;
        }
        support.last().map(|&(z, _)| z).unwrap_or(0)
    }
}

/// `Z_η` for the given parameters.
pub fn partition_function(beta: f64, eta: f64, p: u8) -> Result<f64> {
    Ok(TiltedEnsemble::new(beta, eta, p)?.partition_function())
}

pub fn tilt_mean(beta: f64, eta: f64, p: u8) -> Result<f64> {
    Ok(TiltedEnsemble::new(beta, eta, p)?.tilt_mean())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTension {
    /// `σ_D(u) = η* u - log Z_{η*}`.
    pub sigma: f64,
    /// Tilt whose mean slope is `u`; equals `σ_D'(u)`.
    pub eta_star: f64,
}

/// Legendre transform `σ_D(u) = sup_η {η u - log Z_η}`.
///
/// The supremum is attained where the tilted mean equals `u`; the root is
/// bracketed, then refined by an Illinois secant step with bisection as a
/// fallback, to `10⁻¹² · max(1, |η|)`.
pub fn surface_tension(u: f64, beta: f64, p: u8) -> Result<SurfaceTension> {
    let potential = Potential::try_from(p).map_err(Error::InvalidParameter)?;
    if !u.is_finite() {
        return Err(Error::OutOfRange { u });
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Divergent { eta: 0.0, beta });
    }
    let mean = |eta: f64| -> Result<f64> { Ok(TiltedEnsemble::with_potential(beta, eta, potential)?.tilt_mean() - u) };

    let (mut lo, mut hi) = match potential {
        Potential::Quadratic => {
            let guess = 2.0 * beta * u;
            let mut width = 1.0f64.max(0.1 * guess.abs());
            loop {
                let (a, b) = (guess - width, guess + width);
                if mean(a)? < 0.0 && mean(b)? > 0.0 {
                    break (a, b);
                }
                width *= 2.0;
                if !width.is_finite() {
                    return Err(Error::OutOfRange { u });
                }
            }
        }
        Potential::Linear => {
            // The mean diverges as |η| → β, so every finite u is reachable.
            let mut gap = 0.5;
            loop {
                let (a, b) = (-beta * (1.0 - gap), beta * (1.0 - gap));
                if mean(a)? < 0.0 && mean(b)? > 0.0 {
                    break (a, b);
                }
                gap *= 0.5;
                if gap < 1e-15 {
                    return Err(Error::OutOfRange { u });
                }
            }
        }
    };

    let (mut f_lo, mut f_hi) = (mean(lo)?, mean(hi)?);
    let mut side = 0i8;
    let mut eta = 0.5 * (lo + hi);
    for _ in 0..300 {
        let tol = 1e-12 * eta.abs().max(1.0);
        if hi - lo <= tol {
            break;
        }
        let mut next = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let f = mean(next)?;
        eta = next;
        if f.abs() <= 1e-14 * (1.0 + u.abs()) {
            lo = next;
            hi = next;
            break;
        }
        if f < 0.0 {
            lo = next;
            f_lo = f;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = next;
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    if lo == hi {
        eta = lo;
    } else if (hi - lo) <= 1e-12 * eta.abs().max(1.0) {
        eta = 0.5 * (lo + hi);
    }
    let log_z = TiltedEnsemble::with_potential(beta, eta, potential)?.log_partition();
    Ok(SurfaceTension { sigma: eta * u - log_z, eta_star: eta })
}

/// `κ⁻¹ σ_D'(κ u)` for the quadratic potential; tends to `2βu` as `κ → ∞`.
pub fn scaled_tension_limit(u: f64, beta: f64, kappa: f64) -> Result<f64> {
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {kappa}")));
    }
    Ok(surface_tension(kappa * u, beta, 2)?.eta_star / kappa)
}

/// Equilibrium average of `exp(-2β n)` for the quadratic hop dynamics, where
/// `n = z_i - z_{i-1} + 1` with independent Gibbs slopes. It sets the
/// effective mobility of the hydrodynamic limit.
pub fn hop_mobility(beta: f64) -> Result<f64> {
    let log_z = |eta: f64| -> Result<f64> { Ok(TiltedEnsemble::new(beta, eta, 2)?.log_partition()) };
    let z0 = log_z(0.0)?;
    Ok((-2.0 * beta + log_z(2.0 * beta)? + log_z(-2.0 * beta)? - 2.0 * z0).exp())
}

/// Which spacing divides the three-point Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianScale {
    /// Divide by the grid spacing squared (continuum units).
    #[default]
    Grid,
    /// Unit spacing (lattice units).
    Lattice,
}

/// Periodic three-point Laplacian `(h_{k+1} - 2h_k + h_{k-1}) / Δx²`.
pub fn discrete_laplacian(h: &GridField, scale: LaplacianScale) -> GridField {
    let v = h.values();
    let n = v.len();
    let inv = match scale {
        LaplacianScale::Grid => 1.0 / (h.spacing() * h.spacing()),
        LaplacianScale::Lattice => 1.0,
    };
    let out = (0..n).map(|k| (v[(k + 1) % n] - 2.0 * v[k] + v[(k + n - 1) % n]) * inv).collect();
    GridField::from_parts_unchecked(out, h.spacing())
}

/// Chemical potential `μ_k = -2 (Δ_N h)_k`.
pub fn chemical_potential(h: &GridField, scale: LaplacianScale) -> GridField {
    discrete_laplacian(h, scale).map(|v| -2.0 * v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_log_z(beta: f64, eta: f64, p: u8, radius: i64) -> f64 {
        (-radius..=radius)
            .map(|z| (-beta * (z.abs() as f64).powi(p as i32) + eta * z as f64).exp())
            .sum::<f64>()
            .ln()
    }

    #[test]
    fn partition_function_examples() {
        let z = partition_function(1.0, 0.0, 2).unwrap();
        let expected = 1.0 + 2.0 * (1..=8).map(|k| (-(k * k) as f64).exp()).sum::<f64>();
        assert!((z - expected).abs() < 1e-13);
        assert!((z - 1.772_637).abs() < 1e-6);
        assert!((partition_function(50.0, 0.0, 2).unwrap() - 1.0).abs() < 1e-20);
        let a = partition_function(0.8, 0.37, 2).unwrap();
        let b = partition_function(0.8, -0.37, 2).unwrap();
        assert!((a - b).abs() < 1e-15 * a);
    }

    #[test]
    fn linear_potential_matches_geometric_series() {
        let (beta, eta) = (1.3f64, 0.4);
        let a = (eta - beta).exp();
        let b = (-(beta + eta)).exp();
        let closed = 1.0 + a / (1.0 - a) + b / (1.0 - b);
        assert!((partition_function(beta, eta, 1).unwrap() - closed).abs() < 1e-14);
        let mean = (a / (1.0 - a).powi(2) - b / (1.0 - b).powi(2)) / closed;
        assert!((tilt_mean(beta, eta, 1).unwrap() - mean).abs() < 1e-13);
        assert!(matches!(partition_function(1.0, 1.0, 1), Err(Error::Divergent { .. })));
        assert!(matches!(partition_function(1.0, -1.5, 1), Err(Error::Divergent { .. })));
    }

    #[test]
    fn log_partition_handles_huge_tilts() {
        let ens = TiltedEnsemble::new(1.0, 1000.0, 2).unwrap();
        let m = ens.moments();
        assert!(m.log_z.is_finite());
        assert!((m.log_z - 250_000.0 - brute_log_z(1.0, 0.0, 2, 40)).abs() < 1e-9);
        assert!((m.mean - 500.0).abs() < 1e-3);
    }

    #[test]
    fn tilt_mean_examples() {
        assert_eq!(tilt_mean(1.0, 0.0, 2).unwrap(), 0.0);
        let h = 1e-5;
        let fd = (brute_log_z(1.0, 0.7 + h, 2, 40) - brute_log_z(1.0, 0.7 - h, 2, 40)) / (2.0 * h);
        assert!((tilt_mean(1.0, 0.7, 2).unwrap() - fd).abs() < 1e-6);
        assert!((tilt_mean(1.0, 1.0, 2).unwrap() - 0.5).abs() < 1e-2);
    }

    #[test]
    fn surface_tension_examples() {
        let s0 = surface_tension(0.0, 1.0, 2).unwrap();
        assert!(s0.eta_star.abs() < 1e-12);
        assert!((s0.sigma + brute_log_z(1.0, 0.0, 2, 40)).abs() < 1e-12);

        let a = surface_tension(0.3, 0.7, 2).unwrap();
        let b = surface_tension(-0.3, 0.7, 2).unwrap();
        assert!((a.sigma - b.sigma).abs() < 1e-11);

        let s = surface_tension(0.5, 1.0, 2).unwrap();
        let grid_max = (0..=20_000)
            .map(|i| {
                let eta = s.eta_star - 1e-3 + 1e-7 * i as f64;
                eta * 0.5 - brute_log_z(1.0, eta, 2, 40)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((s.sigma - grid_max).abs() < 1e-8);
    }

    #[test]
    fn legendre_involution() {
        for p in [1u8, 2] {
            for u in [0.0, 0.25, -0.25, 0.5, -0.5, 3.0] {
                let s = surface_tension(u, 1.0, p).unwrap();
                let back = tilt_mean(1.0, s.eta_star, p).unwrap();
                assert!((back - u).abs() <= 1e-10, "p={p} u={u} back={back}");
            }
        }
        assert!(matches!(surface_tension(f64::NAN, 1.0, 2), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn scaled_limit_examples() {
        assert_eq!(scaled_tension_limit(0.0, 1.0, 10.0).unwrap().abs(), 0.0);
        assert!((scaled_tension_limit(0.5, 1.0, 100.0).unwrap() - 1.0).abs() < 1e-2);
        assert!((scaled_tension_limit(0.25, 2.0, 100.0).unwrap() - 1.0).abs() < 1e-2);
        assert!(scaled_tension_limit(0.5, 1.0, 0.5).is_err());
    }

    #[test]
    fn hop_mobility_near_one_at_half_beta() {
        let m = hop_mobility(0.5).unwrap();
        assert!((m - 1.0).abs() < 1e-6, "{m}");
    }

    #[test]
    fn chemical_potential_examples() {
        let flat = GridField::with_spacing(vec![2.0; 8], 1.0).unwrap();
        assert!(chemical_potential(&flat, LaplacianScale::Lattice).values().iter().all(|&v| v == 0.0));

        let peak = GridField::with_spacing(vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(chemical_potential(&peak, LaplacianScale::Grid).values()[2], 4.0);

        let n = 256;
        let tau = 2.0 * std::f64::consts::PI;
        let h = GridField::from_fn(n, |x| (tau * x).sin()).unwrap();
        let mu = chemical_potential(&h, LaplacianScale::Grid);
        for (j, &m) in mu.values().iter().enumerate() {
            let exact = 2.0 * tau * tau * (tau * h.x(j)).sin();
            assert!((m - exact).abs() < 2.0 * tau.powi(4) / (n * n) as f64);
        }
    }
}
