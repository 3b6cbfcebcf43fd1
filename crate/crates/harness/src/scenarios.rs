//! Scenario execution. Each runner writes its artifacts through an
//! [`OutputDir`]; [`run`] appends the manifest last.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crystalflow_core::continuum::{solve_h_equation_with, solve_pde, HRun, RegParams, StepLog};
use crystalflow_core::lattice::{run_ensemble_from, KmcParams, MicroState, TrajectoryOptions};
use crystalflow_core::meso::{integrate_meso, MesoParams};
use crystalflow_core::spectral::{decay_audit, lyapunov_audit, s_norm, DecayReport, LyapunovReport};
use crystalflow_core::statmech::{scaled_tension_limit, surface_tension};
use serde::{Deserialize, Serialize};

use crate::compare::{compare_scales, CompareReport};
use crate::config::{
    sample_grid, HEquationScenario, KmcScenario, MesoScenario, Parameters, PdeScenario, RunConfig,
    SpectralAuditScenario, StatmechTableScenario,
};
use crate::error::{HarnessError, Result};
use crate::output::{num, read_snapshot, Manifest, OutputDir};

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

/// Executes `config`, writing every artifact below `config.out_dir`.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let started = Instant::now();
    let mut out = OutputDir::create(&config.out_dir)?;
    match &config.parameters {
        Parameters::Kmc(p) => run_kmc(p, config.seed, &mut out)?,
        Parameters::Meso(p) => run_meso(p, &mut out)?,
        Parameters::Pde(p) => run_pde(p, &mut out)?,
        Parameters::HEquation(p) => run_h_equation(p, &mut out)?,
        Parameters::Compare(p) => {
            let report = compare_scales(p, config.seed)?;
            write_compare(&report, &mut out)?;
        }
        Parameters::SpectralAudit(p) => {
            let audit = spectral_audit(p)?;
            out.write_json("audit.json", &audit)?;
        }
        Parameters::StatmechTable(p) => {
            let rows = statmech_table(p)?;
            out.write_csv("table.csv", &STATMECH_HEADER, rows)?;
        }
    }
    let manifest = Manifest {
        scenario: config.scenario.name().to_string(),
        config_hash: config.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs: out.files().to_vec(),
    };
    out.write_json("manifest.json", &manifest)?;
    Ok(RunSummary { out_dir: out.root().to_path_buf(), manifest })
}

fn run_kmc(p: &KmcScenario, seed: u64, out: &mut OutputDir) -> Result<()> {
    let params = KmcParams {
        beta: p.beta,
        p: p.p,
        rho_evap: p.rho_evap,
        tau_dep_inv: p.tau_dep_inv,
        mu_dep: p.mu_dep,
        seed,
    };
    params.validate()?;
    let target = p.initial.nodes(p.n)?;
    let mut sample_times = vec![0.0];
    sample_times.extend(sample_grid(p.sample_dt, p.t_final));
    sample_times.push(p.t_final);
    let options = TrajectoryOptions { sample_times, record_events: p.record_events };
    let rounded: Vec<i64> = target.iter().map(|v| v.round() as i64).collect();
    let potential = p.p.exponent();
    let ensemble = run_ensemble_from(&params, p.t_final, p.n_reps, &options, |rng| {
        if p.local_equilibrium {
            MicroState::local_equilibrium(&target, p.beta, potential, rng)
        } else {
            MicroState::new(rounded.clone())
        }
    })?;

    let first = &ensemble.replicates[0];
    if p.record_events {
        #[derive(Serialize)]
        struct EventLine {
            t: f64,
            event_kind: crystalflow_core::lattice::EventKind,
            site: usize,
        }
        let mut t = 0.0;
        let lines = first.events.iter().map(|e| {
            t += e.waiting_time;
            EventLine { t, event_kind: e.kind, site: e.site }
        });
        out.write_ndjson("events.ndjson", lines)?;
    }
    out.write_ndjson("snapshots.ndjson", &first.snapshots)?;
    let mut rows = Vec::new();
    for (s, &t) in ensemble.sample_times.iter().enumerate() {
        for site in 0..p.n {
            rows.push(vec![num(t), site.to_string(), num(ensemble.mean[s][site]), num(ensemble.variance[s][site])]);
        }
    }
    out.write_csv("ensemble.csv", &["t", "site", "mean", "variance"], rows)
}

fn run_meso(p: &MesoScenario, out: &mut OutputDir) -> Result<()> {
    let mut params = MesoParams::continuum_matched(p.n);
    params.hop_coef = p.hop_coef.unwrap_or(params.hop_coef);
    params.dep_coef = p.dep_coef;
    params.beta = p.beta;
    params.laplacian = p.laplacian;
    let h0 = p.initial.field(p.n)?;
    let traj = integrate_meso(&h0, &params, p.t_final, p.tol, &sample_grid(p.sample_dt, p.t_final))?;
    let mut rows = Vec::new();
    for (t, h) in traj.times.iter().zip(&traj.states) {
        for (k, v) in h.values().iter().enumerate() {
            rows.push(vec![num(*t), num(h.x(k)), num(*v)]);
        }
    }
    out.write_csv("meso.csv", &["t", "x", "h"], rows)?;
    #[derive(Serialize)]
    struct Steps {
        accepted: u64,
        rejected: u64,
    }
    out.write_json("steps.json", &Steps { accepted: traj.accepted_steps, rejected: traj.rejected_steps })
}

fn run_pde(p: &PdeScenario, out: &mut OutputDir) -> Result<()> {
    let reg = RegParams::new(p.epsilon, p.alpha)?;
    let u0 = p.initial.field(p.n_g)?;
    let run = solve_pde(&u0, &reg, p.t_final, &p.control, &sample_grid(p.sample_dt, p.t_final))?;
    let r = &run.report;
    let rows = (0..r.times.len()).map(|i| {
        vec![
            num(r.times[i]),
            num(r.min_u[i]),
            num(r.f[i]),
            num(r.e[i]),
            num(r.f_eps[i]),
            num(r.log_invariant[i]),
            num(r.integral_e[i]),
        ]
    });
    out.write_csv("report.csv", &["t", "min_u", "F", "E", "F_eps", "log_invariant", "integral_E"], rows)?;
    for (i, (u, t)) in run.snapshots.iter().zip(&r.times).enumerate() {
        out.write_snapshot(&format!("snapshots/u_{i:05}"), u, *t)?;
    }
    out.write_json("summary.json", &RunTotals::new(&run.steps, r.max_e_increase, r.global_min_u))
}

#[derive(Debug, Serialize)]
struct RunTotals {
    accepted_steps: usize,
    rejected_steps: u64,
    min_step: f64,
    max_e_increase: Option<f64>,
    global_min_u: Option<f64>,
}

impl RunTotals {
    fn new(steps: &StepLog, max_e_increase: f64, global_min_u: f64) -> Self {
        Self {
            accepted_steps: steps.steps.len(),
            rejected_steps: steps.rejected,
            min_step: steps.steps.iter().copied().fold(f64::INFINITY, f64::min),
            max_e_increase: max_e_increase.is_finite().then_some(max_e_increase),
            global_min_u: global_min_u.is_finite().then_some(global_min_u),
        }
    }
}

fn run_h_equation(p: &HEquationScenario, out: &mut OutputDir) -> Result<()> {
    let h0 = p.initial.field(p.n_g)?;
    let run = solve_h_equation_with(&h0, p.c2, p.t_final, &p.control, &sample_grid(p.sample_dt, p.t_final))?;
    let rows = run.times.iter().zip(&run.states).map(|(t, h)| {
        vec![num(*t), num(h.mean()), num(s_norm(h, 0.0)), num(s_norm(h, 2.0)), num(s_norm(h, 4.0)), num(s_norm(h, 6.0))]
    });
    out.write_csv("norms.csv", &["t", "mean", "norm_0", "norm_2", "norm_4", "norm_6"], rows)?;
    for (i, (h, t)) in run.states.iter().zip(&run.times).enumerate() {
        out.write_snapshot(&format!("snapshots/h_{i:05}"), h, *t)?;
    }
    out.write_json("summary.json", &RunTotals::new(&run.steps, f64::NAN, f64::NAN))
}

/// Loads the `h_*.f64` snapshots of a trajectory directory (or of its
/// `snapshots/` subdirectory), ordered by time.
pub fn load_h_trajectory(dir: &Path) -> Result<HRun> {
    let snap_dir = if dir.join("snapshots").is_dir() { dir.join("snapshots") } else { dir.to_path_buf() };
    let entries = std::fs::read_dir(&snap_dir).map_err(|e| HarnessError::io(&snap_dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(&snap_dir, e))?.path();
        let is_h = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("h_") && n.ends_with(".f64"));
        if is_h {
            paths.push(path);
        }
    }
    let mut snaps = paths.iter().map(|p| read_snapshot(p)).collect::<Result<Vec<_>>>()?;
    if snaps.is_empty() {
        return Err(HarnessError::ConfigInvalid(format!("no h_*.f64 snapshots in {}", snap_dir.display())));
    }
    snaps.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (states, times) = snaps.into_iter().unzip();
    Ok(HRun { times, states, steps: StepLog::default() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralAudit {
    pub lyapunov: LyapunovReport,
    pub decay: DecayReport,
}

/// Lyapunov audit at `s2` and decay envelope for `(s1, s2)`.
pub fn spectral_audit(p: &SpectralAuditScenario) -> Result<SpectralAudit> {
    let run = load_h_trajectory(&p.traj)?;
    Ok(SpectralAudit { lyapunov: lyapunov_audit(&run, p.s2)?, decay: decay_audit(&run, p.s1, p.s2)? })
}

pub const STATMECH_HEADER: [&str; 4] = ["u", "eta_star", "sigma_D", "kappa_scaled"];

/// Rows of `(u, η*, σ_D, κ⁻¹σ'_D(κu))`; the last column is empty for `p = 1`.
pub fn statmech_table(p: &StatmechTableScenario) -> Result<Vec<Vec<String>>> {
    let steps = p.u_steps.max(1);
    let mut rows = Vec::with_capacity(steps);
    for i in 0..steps {
        let u = if steps == 1 { p.u_min } else { p.u_min + (p.u_max - p.u_min) * i as f64 / (steps - 1) as f64 };
        let st = surface_tension(u, p.beta, p.p.exponent())?;
        let scaled = if p.p.exponent() == 2 { num(scaled_tension_limit(u, p.beta, p.kappa)?) } else { String::new() };
        rows.push(vec![num(u), num(st.eta_star), num(st.sigma), scaled]);
    }
    Ok(rows)
}

fn write_compare(report: &CompareReport, out: &mut OutputDir) -> Result<()> {
    let rows = report.rows.iter().map(|r| {
        let pair = match r.pair {
            crate::compare::ScalePair::KmcPde => "kmc_pde",
            crate::compare::ScalePair::MesoPde => "meso_pde",
        };
        vec![
            pair.to_string(),
            r.n.to_string(),
            r.box_size.to_string(),
            r.n_reps.to_string(),
            num(r.t),
            num(r.l2_distance),
        ]
    });
    out.write_csv("compare.csv", &["pair", "n", "box_size", "n_reps", "t", "l2_distance"], rows)?;
    out.write_json("compare.json", report)
}
