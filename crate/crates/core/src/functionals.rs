//! Energies and pointwise bounds evaluated on grid fields.

use serde::{Deserialize, Serialize};

use crate::continuum::RegParams;
use crate::fft::Fourier;
use crate::{Error, GridField, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalName {
    F,
    E,
    FEps,
    LogInvariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub name: FunctionalName,
    pub value: f64,
    pub t: f64,
}

/// Mass `F(u) = ∫ u dx`.
pub fn functional_f(u: &GridField) -> f64 {
    u.integral()
}

/// `E(u) = ∫ u_xx² + u_x² dx`, evaluated on the Fourier side.
pub fn functional_e(u: &GridField) -> f64 {
    energy_with(&mut Fourier::for_field(u), u)
}

/// [`functional_e`] reusing a transform.
pub fn energy_with(fourier: &mut Fourier, u: &GridField) -> f64 {
    let coeffs = fourier.forward(u.values());
    let mut acc = 0.0;
    for (j, c) in coeffs.iter().enumerate() {
        let xi2 = fourier.angular(j).powi(2);
        acc += c.norm_sqr() * (xi2 * xi2 + xi2);
    }
    acc * u.domain_length()
}

fn require_positive(u: &GridField) -> Result<()> {
    match u.values().iter().position(|&v| !(v > 0.0)) {
        Some(index) => Err(Error::NonPositiveState { index, value: u.values()[index] }),
        None => Ok(()),
    }
}

/// Perturbed mass `F_ε(u) = ∫ ε^α/(1-α) u^{1-α} + u dx`.
pub fn functional_f_eps(u: &GridField, reg: &RegParams) -> Result<f64> {
    require_positive(u)?;
    let c = reg.eps_alpha() / (1.0 - reg.alpha);
    let s: f64 = u.values().iter().map(|&v| c * v.powf(1.0 - reg.alpha) + v).sum();
    Ok(s * u.spacing())
}

/// `∫ (ε^α/α) u^{-α} - ln u dx`, conserved by the regularised flow.
pub fn log_invariant(u: &GridField, reg: &RegParams) -> Result<f64> {
    require_positive(u)?;
    let c = reg.eps_alpha() / reg.alpha;
    let s: f64 = u.values().iter().map(|&v| c * v.powf(-reg.alpha) - v.ln()).sum();
    Ok(s * u.spacing())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinLemmaReport {
    pub holds: bool,
    /// `min_j [(2/3)‖u_xx‖ d_j^{3/2} - (u_j - u_min)]`.
    pub worst_slack: f64,
    pub argmin: usize,
    pub uxx_l2: f64,
}

/// Checks `u(x) - u_min ≤ (2/3) ‖u_xx‖_{L²} |x - x*|^{3/2}` at every node,
/// with `x*` the grid argmin and `|·|` the periodic distance.
pub fn min_lemma_check(u: &GridField) -> MinLemmaReport {
    let mut fourier = Fourier::for_field(u);
    let uxx = GridField::from_parts_unchecked(fourier.derivative(u.values(), 2), u.spacing());
    let norm = uxx.l2_norm();
    let star = u.argmin();
    let u_min = u.values()[star];
    let length = u.domain_length();
    let mut worst = f64::INFINITY;
    for (j, &v) in u.values().iter().enumerate() {
        let raw = (u.x(j) - u.x(star)).abs();
        let d = raw.min(length - raw);
        worst = worst.min(2.0 / 3.0 * norm * d.powf(1.5) - (v - u_min));
    }
    let scale = 1.0 + u.max_abs();
    MinLemmaReport { holds: worst >= -1e-12 * scale, worst_slack: worst, argmin: star, uxx_l2: norm }
}
