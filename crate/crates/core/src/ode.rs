//! Adaptive Dormand–Prince 5(4) integrator for autonomous-or-not systems
//! `y' = f(t, y)`.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen from the initial slope when `None`.
    pub initial_step: Option<f64>,
    /// Abort once the accepted step would drop below this fraction of the
    /// integration span.
    pub min_step_fraction: f64,
    pub max_steps: u64,
}

impl Dopri5Options {
    pub fn with_tolerance(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, initial_step: None, min_step_fraction: 1e-14, max_steps: 50_000_000 }
    }
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self::with_tolerance(1e-8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub accepted: u64,
    pub rejected: u64,
    /// Smallest accepted step.
    pub min_step: f64,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates from `t0` to `t_final`, recording the state at `t0` and at
/// every sample time in `(t0, t_final]` (steps are clamped to land on them
/// exactly). The final time is always recorded last.
pub fn integrate<F>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_final: f64,
    sample_times: &[f64],
    opts: &Dopri5Options,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(t_final > t0) {
        return Err(Error::InvalidParameter(format!("t_final {t_final} must exceed t0 {t0}")));
    }
    let n = y0.len();
    let span = t_final - t0;
    let mut stops: Vec<f64> = sample_times.iter().copied().filter(|&t| t > t0 && t < t_final).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    stops.push(t_final);

    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];

    let mut t = t0;
    rhs(t, &y, &mut k[0])?;
    let mut h = opts.initial_step.unwrap_or_else(|| {
        let scale = y.iter().map(|v| opts.atol + opts.rtol * v.abs());
        let d0 = rms(y.iter().zip(scale.clone()).map(|(v, s)| v / s));
        let d1 = rms(k[0].iter().zip(scale).map(|(v, s)| v / s));
        let guess = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        guess.min(span)
    });

    let mut out = OdeSolution { times: vec![t0], states: vec![y.clone()], accepted: 0, rejected: 0, min_step: f64::INFINITY };
    let mut err_prev: f64 = 1e-4;
    let mut next_stop = 0;
    let h_min = opts.min_step_fraction * span;

    while next_stop < stops.len() {
        if out.accepted + out.rejected >= opts.max_steps {
            return Err(Error::StiffnessAbort { t, dt: h });
        }
        let target = stops[next_stop];
        let clamped = h >= target - t;
        let step = if clamped { target - t } else { h };

        let stages = (|| -> Result<()> {
            let stage = |tmp: &mut [f64], k: &[Vec<f64>], coeffs: &[(usize, f64)]| {
                for i in 0..n {
                    let mut acc = 0.0;
                    for &(j, a) in coeffs {
                        acc += a * k[j][i];
                    }
                    tmp[i] = y[i] + step * acc;
                }
            };
            stage(&mut tmp, &k, &[(0, A21)]);
            rhs(t + C2 * step, &tmp, &mut k[1])?;
            stage(&mut tmp, &k, &[(0, A31), (1, A32)]);
            rhs(t + C3 * step, &tmp, &mut k[2])?;
            stage(&mut tmp, &k, &[(0, A41), (1, A42), (2, A43)]);
            rhs(t + C4 * step, &tmp, &mut k[3])?;
            stage(&mut tmp, &k, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
            rhs(t + C5 * step, &tmp, &mut k[4])?;
            stage(&mut tmp, &k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
            rhs(t + step, &tmp, &mut k[5])?;
            stage(&mut y_new, &k, &[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)]);
            rhs(t + step, &y_new, &mut k[6])
        })();
        // A failing trial stage (e.g. an overflow guard) is a rejected step.
        if let Err(e) = stages {
            out.rejected += 1;
            h = step * 0.1;
            if h < h_min {
                return Err(e);
            }
            continue;
        }

        for i in 0..n {
            err[i] = step * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        }
        let e = rms((0..n).map(|i| err[i] / (opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs()))));
        if !e.is_finite() {
            out.rejected += 1;
            h = step * 0.2;
            if h < h_min {
                return Err(Error::StiffnessAbort { t, dt: h });
            }
            continue;
        }

        if e <= 1.0 {
            t = if clamped { target } else { t + step };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            out.accepted += 1;
            out.min_step = out.min_step.min(step);
            if clamped {
                out.times.push(t);
                out.states.push(y.clone());
                next_stop += 1;
            }
            let fac = if e == 0.0 { 5.0 } else { 0.9 * e.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0) };
            err_prev = e.max(1e-4);
            // A clamped step says nothing about the unclamped size.
            h = if clamped && step < h { h } else { step * fac.clamp(0.2, 5.0) };
        } else {
            out.rejected += 1;
            h = step * (0.9 * e.powf(-0.2)).max(0.2);
        }
        if h < h_min && next_stop < stops.len() && stops[next_stop] - t > h_min {
            return Err(Error::StiffnessAbort { t, dt: h });
        }
    }
    Ok(out)
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values {
        sum += v * v;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_to_tolerance() {
        let sol = integrate(
            |_, y, dy| {
                dy[0] = -y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            3.0,
            &[1.0, 2.0],
            &Dopri5Options::with_tolerance(1e-10),
        )
        .unwrap();
        assert_eq!(sol.times, vec![0.0, 1.0, 2.0, 3.0]);
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert!((y[0] - (-t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_oscillator_with_time_dependence() {
        // y'' = -y with y = cos t, written with an explicit time argument.
        let sol = integrate(
            |t, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0] + 0.0 * t;
                Ok(())
            },
            0.0,
            &[1.0, 0.0],
            10.0,
            &[],
            &Dopri5Options::with_tolerance(1e-11),
        )
        .unwrap();
        let y = sol.states.last().unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn stiff_problem_aborts() {
        let mut opts = Dopri5Options::with_tolerance(1e-8);
        opts.max_steps = 1000;
        let r = integrate(
            |_, y, dy| {
                dy[0] = -1e12 * (y[0] - 1.0);
                Ok(())
            },
            0.0,
            &[0.0],
            1.0,
            &[],
            &opts,
        );
        assert!(matches!(r, Err(Error::StiffnessAbort { .. })));
    }

    #[test]
    fn fixed_point_is_exact() {
        let sol = integrate(|_, _, dy| {
            dy.fill(0.0);
            Ok(())
        }, 0.0, &[2.5, -1.0], 1.0, &[0.5], &Dopri5Options::default())
        .unwrap();
        assert!(sol.states.iter().all(|s| s == &vec![2.5, -1.0]));
    }
}
