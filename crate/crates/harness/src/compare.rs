//! Cross-scale consistency experiments: ensemble-mean coarse-grained KMC
//! against the continuum height equation, and the mesoscale ODE system
//! against the same equation.
//!
//! KMC runs hopping only at `β = ½`, in local equilibrium around
//! `N² H₀((i - (M-1)/2)/N)` so that box `k` is centred on the macroscopic
//! node `kM/N`. Macroscopic time `T` maps to lattice time
//! `t = 2 N⁴ T / κ(β)` with `κ` the equilibrium hop mobility; the reference
//! is the conservative flow `H_T = Δ e^{-ΔH}`.
//! All profiles are mean-shifted before distances are taken.

use crystalflow_core::continuum::{solve_h_equation, solve_h_equation_with, StepControl};
use crystalflow_core::lattice::{
    coarse_grain_heights, run_ensemble_from, KmcParams, MicroState, Potential, TrajectoryOptions,
};
use crystalflow_core::meso::{integrate_meso, MesoParams};
use crystalflow_core::statmech::hop_mobility;
use crystalflow_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::Profile;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderPoint {
    pub n: usize,
    pub box_size: usize,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KmcCompare {
    pub amplitude: f64,
    pub mode: u32,
    /// Macroscopic horizon.
    pub t_final: f64,
    /// Number of equally spaced comparison times in `(0, t_final]`
    /// (`t = 0` is always included).
    pub samples: usize,
    pub ladder: Vec<LadderPoint>,
}

impl Default for KmcCompare {
    fn default() -> Self {
        Self {
            amplitude: 5e-4,
            mode: 1,
            t_final: 2e-6,
            samples: 2,
            ladder: vec![
                LadderPoint { n: 64, box_size: 8, n_reps: 50 },
                LadderPoint { n: 128, box_size: 8, n_reps: 100 },
                LadderPoint { n: 256, box_size: 16, n_reps: 200 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MesoCompare {
    pub sizes: Vec<usize>,
    pub initial: Profile,
    pub t_final: f64,
    pub tol: f64,
}

impl Default for MesoCompare {
    fn default() -> Self {
        Self {
            sizes: vec![64, 128, 256],
            initial: Profile::Fourier { offset: 0.0, cos: vec![0.01], sin: vec![0.0, 0.003] },
            t_final: 1e-5,
            tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeCompare {
    /// Grid of the continuum reference for the KMC comparison.
    pub n_g: usize,
    pub tol: f64,
}

impl Default for PdeCompare {
    fn default() -> Self {
        Self { n_g: 256, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub kmc: KmcCompare,
    pub meso: MesoCompare,
    pub pde: PdeCompare,
    /// Skip the KMC ladder (it dominates the cost).
    pub skip_kmc: bool,
    /// Skip the meso-vs-continuum sweep.
    pub skip_meso: bool,
}

/// Inverse temperature at which the lattice is matched to the unit
/// continuum equation.
pub const MATCHED_BETA: f64 = 0.5;

impl CompareConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::ConfigInvalid(m));
        for p in &self.kmc.ladder {
            if p.box_size < 2 || p.n % p.box_size != 0 || p.n_reps == 0 {
                return bad(format!("ladder point {p:?} needs box_size >= 2 dividing n and n_reps >= 1"));
            }
            if !self.pde.n_g.is_multiple_of(p.n / p.box_size) {
                return bad(format!("pde.n_g = {} is not a multiple of the {} coarse nodes", self.pde.n_g, p.n / p.box_size));
            }
        }
        if !(self.kmc.t_final > 0.0 && self.meso.t_final > 0.0 && self.kmc.samples >= 1) {
            return bad("comparison horizons must be > 0 with at least one sample".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePair {
    KmcPde,
    MesoPde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub pair: ScalePair,
    pub n: usize,
    pub box_size: usize,
    pub n_reps: usize,
    /// Macroscopic time.
    pub t: f64,
    pub l2_distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    /// Observed orders `log(d_i/d_{i+1}) / log(N_{i+1}/N_i)` of the
    /// meso-vs-continuum distances.
    pub meso_orders: Vec<f64>,
    /// Every observed meso order is at least 1.8.
    pub meso_verdict: Option<bool>,
    /// At every comparison time the KMC distance decreases strictly along
    /// the ladder.
    pub kmc_verdict: Option<bool>,
}

impl CompareReport {
    pub fn distances(&self, pair: ScalePair, t: f64) -> Vec<f64> {
        self.rows.iter().filter(|r| r.pair == pair && r.t == t).map(|r| r.l2_distance).collect()
    }
}

/// Root-mean-square distance after removing each profile's mean.
pub fn shifted_distance(a: &[f64], b: &[f64]) -> f64 {
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let s: f64 = a.iter().zip(b).map(|(x, y)| ((x - ma) - (y - mb)).powi(2)).sum();
    (s / a.len() as f64).sqrt()
}

/// Runs both experiments and fills in the verdicts.
pub fn compare_scales(config: &CompareConfig, seed: u64) -> Result<CompareReport> {
    config.validate()?;
    let mut report = CompareReport::default();
    if !config.skip_meso {
        meso_vs_pde(config, &mut report)?;
    }
    if !config.skip_kmc {
        kmc_vs_pde(config, seed, &mut report)?;
    }
    Ok(report)
}

fn meso_vs_pde(config: &CompareConfig, report: &mut CompareReport) -> Result<()> {
    let m = &config.meso;
    let control = StepControl::adaptive(m.tol);
    let mut dists = Vec::new();
    for &n in &m.sizes {
        let h0 = m.initial.field(n)?;
        let meso = integrate_meso(&h0, &MesoParams::continuum_matched(n), m.t_final, m.tol, &[])?;
        let pde = solve_h_equation(&h0, m.t_final, &control, &[])?;
        let a = meso.states.last().expect("final state");
        let b = pde.states.last().expect("final state");
        let d = a.l2_distance(b)?;
        report.rows.push(CompareRow { pair: ScalePair::MesoPde, n, box_size: 1, n_reps: 1, t: m.t_final, l2_distance: d });
        dists.push((n, d));
    }
    report.meso_orders =
        dists.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[1].0 as f64 / w[0].0 as f64).ln()).collect();
    report.meso_verdict = Some(!report.meso_orders.is_empty() && report.meso_orders.iter().all(|&o| o >= 1.8));
    Ok(())
}

fn kmc_vs_pde(config: &CompareConfig, seed: u64, report: &mut CompareReport) -> Result<()> {
    let k = &config.kmc;
    let beta = MATCHED_BETA;
    let kappa = hop_mobility(beta)?;
    let macro_times: Vec<f64> = (0..=k.samples).map(|s| k.t_final * s as f64 / k.samples as f64).collect();
    let shape = Profile::Cosine { amplitude: k.amplitude, mode: k.mode, offset: 0.0 };

    let h0 = shape.field(config.pde.n_g)?;
    let pde = solve_h_equation_with(&h0, 0.0, k.t_final, &StepControl::adaptive(config.pde.tol), &macro_times)?;
    if pde.times.len() != macro_times.len() {
        return Err(Error::GridMismatch("continuum reference missed a comparison time".into()).into());
    }

    let mut per_time: Vec<Vec<f64>> = vec![Vec::new(); macro_times.len()];
    for point in &k.ladder {
        let n = point.n as f64;
        let shift = (point.box_size as f64 - 1.0) / 2.0;
        let target: Vec<f64> = (0..point.n).map(|i| n * n * shape.eval((i as f64 - shift) / n)).collect();
        let to_micro = 2.0 * n.powi(4) / kappa;
        let options =
            TrajectoryOptions { sample_times: macro_times.iter().map(|t| t * to_micro).collect(), record_events: false };
        let params = KmcParams::hopping(beta, Potential::Quadratic, seed);
        let ensemble = run_ensemble_from(&params, k.t_final * to_micro, point.n_reps, &options, |rng| {
            MicroState::local_equilibrium(&target, beta, 2, rng)
        })?;
        let coarse_nodes = point.n / point.box_size;
        let stride = config.pde.n_g / coarse_nodes;
        for (s, &t) in macro_times.iter().enumerate() {
            let coarse = coarse_grain_heights(&ensemble.mean[s], ensemble.sample_times[s], point.box_size)?
                .rescaled(point.n, &params)?;
            let reference: Vec<f64> = pde.states[s].values().iter().step_by(stride).copied().collect();
            let d = shifted_distance(&coarse.heights, &reference);
            report.rows.push(CompareRow {
                pair: ScalePair::KmcPde,
                n: point.n,
                box_size: point.box_size,
                n_reps: point.n_reps,
                t,
                l2_distance: d,
            });
            per_time[s].push(d);
        }
    }
    report.kmc_verdict = Some(per_time.iter().all(|d| d.windows(2).all(|w| w[1] < w[0])));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_distance_ignores_means() {
        assert_eq!(shifted_distance(&[1.0, 2.0, 3.0], &[11.0, 12.0, 13.0]), 0.0);
        let d = shifted_distance(&[1.0, -1.0], &[0.0, 0.0]);
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flat_profiles_agree() {
        let config = CompareConfig {
            kmc: KmcCompare {
                amplitude: 0.0,
                t_final: 1e-7,
                samples: 1,
                ladder: vec![LadderPoint { n: 16, box_size: 4, n_reps: 4 }],
                ..Default::default()
            },
            meso: MesoCompare { sizes: vec![16, 32], initial: Profile::Constant { value: 2.0 }, t_final: 1e-4, tol: 1e-8 },
            pde: PdeCompare { n_g: 16, tol: 1e-8 },
            ..Default::default()
        };
        let r = compare_scales(&config, 1).unwrap();
        for row in r.rows.iter().filter(|r| r.pair == ScalePair::MesoPde) {
            assert_eq!(row.l2_distance, 0.0);
        }
        // Only equilibrium fluctuations remain for the lattice.
        for row in r.rows.iter().filter(|r| r.pair == ScalePair::KmcPde) {
            assert!(row.l2_distance < 0.05, "{row:?}");
        }
    }

    #[test]
    fn misaligned_grids_rejected() {
        let mut config = CompareConfig::default();
        config.pde.n_g = 24;
        assert!(matches!(compare_scales(&config, 0), Err(HarnessError::ConfigInvalid(_))));
    }
}
