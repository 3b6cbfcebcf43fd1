//! WebAssembly bindings behind `www/index.html`.
//!
//! Every export returns plain numbers or flat `Vec<f64>` buffers so the page
//! needs no glue beyond what `wasm-bindgen` generates.

use crystalflow_core::continuum::{solve_h_equation, StepControl};
use crystalflow_core::spectral::{critical_threshold, f2_closed, SpectralProfile, DERIVATIVE_UNIT};
use crystalflow_core::statmech::{scaled_tension_limit, surface_tension};
use crystalflow_core::GridField;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Critical smallness threshold `y_s*`.
#[wasm_bindgen]
pub fn threshold(s: f64) -> Result<f64, JsError> {
    critical_threshold(s).map_err(js_err)
}

/// Dissipation constant `1 - f_2(y)`; negative once `y` passes `y_2*`.
#[wasm_bindgen]
pub fn sigma(y: f64) -> f64 {
    1.0 - f2_closed(y)
}

/// Rows `[u, η*, σ_D, κ⁻¹σ'_D(κu)]` flattened, for `steps` tilts in `[u_min, u_max]`.
/// The last column is NaN for `p = 1`.
#[wasm_bindgen]
pub fn tension_table(beta: f64, p: u8, u_min: f64, u_max: f64, steps: usize, kappa: f64) -> Result<Vec<f64>, JsError> {
    let steps = steps.max(2);
    let mut out = Vec::with_capacity(4 * steps);
    for i in 0..steps {
        let u = u_min + (u_max - u_min) * i as f64 / (steps - 1) as f64;
        let st = surface_tension(u, beta, p).map_err(js_err)?;
        let scaled = if p == 2 { scaled_tension_limit(u, beta, kappa).map_err(js_err)? } else { f64::NAN };
        out.extend([u, st.eta_star, st.sigma, scaled]);
    }
    Ok(out)
}

/// Evolves `h0 = a cos(2πx) + b sin(4πx)` under the height equation and
/// returns `[t, ‖h‖_2]` pairs (derivative-scaled weights) at `samples`
/// log-spaced times up to `t_final`.
#[wasm_bindgen]
pub fn decay_curve(a: f64, b: f64, t_final: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    let tau = std::f64::consts::TAU;
    let h0 = GridField::from_fn(64, |x| a * (tau * x).cos() + b * (2.0 * tau * x).sin()).map_err(js_err)?;
    let samples = samples.max(2);
    let t0 = t_final * 1e-4;
    let times: Vec<f64> = (0..samples).map(|i| t0 * (t_final / t0).powf(i as f64 / (samples - 1) as f64)).collect();
    let run = solve_h_equation(&h0, t_final, &StepControl::adaptive(1e-7), &times).map_err(js_err)?;
    Ok(run
        .times
        .iter()
        .zip(&run.states)
        .flat_map(|(t, h)| [*t, SpectralProfile::from_field(h).scaled_norm(2.0, DERIVATIVE_UNIT)])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exports_on_native() {
        assert!((threshold(-1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(sigma(0.05) > 0.0 && sigma(0.2) < 0.0);
        let table = tension_table(1.0, 2, -0.5, 0.5, 3, 10.0).unwrap();
        assert_eq!(table.len(), 12);
        assert!(table[5].abs() < 1e-12, "zero tilt needs zero field");
        let curve = decay_curve(1e-3, 0.0, 1e-3, 5).unwrap();
        assert!(curve.chunks(2).all(|p| p[1].is_finite()));
        assert!(curve[curve.len() - 1] < curve[1]);
    }
}
