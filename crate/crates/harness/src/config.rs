//! Run configuration: a TOML document with a scenario name, a seed, an
//! output directory and a `[parameters]` table whose schema depends on the
//! scenario. Unknown keys are rejected everywhere.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crystalflow_core::continuum::StepControl;
use crystalflow_core::lattice::Potential;
use crystalflow_core::statmech::LaplacianScale;
use crystalflow_core::GridField;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compare::CompareConfig;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Kmc,
    Meso,
    Pde,
    HEquation,
    Compare,
    SpectralAudit,
    StatmechTable,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Kmc => "kmc",
            Scenario::Meso => "meso",
            Scenario::Pde => "pde",
            Scenario::HEquation => "h_equation",
            Scenario::Compare => "compare",
            Scenario::SpectralAudit => "spectral_audit",
            Scenario::StatmechTable => "statmech_table",
        }
    }
}

/// A periodic profile on `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `offset + amplitude · sin(2π mode x)`.
    Sine {
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + amplitude · cos(2π mode x)`.
    Cosine {
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + Σ_m cos[m-1] cos(2π m x) + sin[m-1] sin(2π m x)`.
    Fourier {
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
    /// Node values read from a text file (numbers separated by whitespace or
    /// commas). Relative paths are resolved against the config file.
    File {
        path: PathBuf,
    },
}

fn one() -> u32 {
    1
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        let wave = |mode: u32| 2.0 * PI * mode as f64 * x;
        match self {
            Profile::Constant { value } => *value,
            Profile::Sine { amplitude, mode, offset } => offset + amplitude * wave(*mode).sin(),
            Profile::Cosine { amplitude, mode, offset } => offset + amplitude * wave(*mode).cos(),
            Profile::Fourier { offset, cos, sin } => {
                let c: f64 = cos.iter().enumerate().map(|(m, a)| a * wave(m as u32 + 1).cos()).sum();
                let s: f64 = sin.iter().enumerate().map(|(m, a)| a * wave(m as u32 + 1).sin()).sum();
                offset + c + s
            }
            Profile::File { .. } => f64::NAN,
        }
    }

    /// Values at the nodes `j/n`.
    pub fn nodes(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Profile::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                let values = text
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>().map_err(|e| HarnessError::ConfigInvalid(format!("{}: {e}", path.display()))))
                    .collect::<Result<Vec<f64>>>()?;
                if values.len() != n {
                    return Err(HarnessError::ConfigInvalid(format!(
                        "{} holds {} values, expected {n}",
                        path.display(),
                        values.len()
                    )));
                }
                Ok(values)
            }
            _ => Ok((0..n).map(|j| self.eval(j as f64 / n as f64)).collect()),
        }
    }

    pub fn field(&self, n: usize) -> Result<GridField> {
        Ok(GridField::new(self.nodes(n)?)?)
    }

    fn resolve(&mut self, base: &Path) {
        if let Profile::File { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmcScenario {
    pub n: usize,
    pub beta: f64,
    #[serde(default = "quadratic")]
    pub p: Potential,
    #[serde(default)]
    pub rho_evap: f64,
    #[serde(default)]
    pub tau_dep_inv: f64,
    #[serde(default)]
    pub mu_dep: f64,
    pub t_final: f64,
    #[serde(default = "one_usize")]
    pub n_reps: usize,
    /// Snapshot spacing; only `t_final` is sampled when absent.
    #[serde(default)]
    pub sample_dt: Option<f64>,
    /// Initial heights in lattice units (rounded to integers unless
    /// `local_equilibrium` is set).
    pub initial: Profile,
    /// Draw each replicate's initial state from the local-equilibrium
    /// measure around `initial`.
    #[serde(default)]
    pub local_equilibrium: bool,
    #[serde(default = "yes")]
    pub record_events: bool,
}

fn quadratic() -> Potential {
    Potential::Quadratic
}

fn one_usize() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MesoScenario {
    pub n: usize,
    /// Defaults to `n²`, the continuum-matched value.
    #[serde(default)]
    pub hop_coef: Option<f64>,
    #[serde(default = "one_f64")]
    pub dep_coef: f64,
    #[serde(default = "half")]
    pub beta: f64,
    #[serde(default)]
    pub laplacian: LaplacianScale,
    pub t_final: f64,
    #[serde(default = "meso_tol")]
    pub tol: f64,
    #[serde(default)]
    pub sample_dt: Option<f64>,
    pub initial: Profile,
}

fn one_f64() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn meso_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeScenario {
    pub n_g: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub t_final: f64,
    #[serde(default)]
    pub sample_dt: Option<f64>,
    pub initial: Profile,
    #[serde(default)]
    pub control: StepControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HEquationScenario {
    pub n_g: usize,
    pub t_final: f64,
    #[serde(default = "one_f64")]
    pub c2: f64,
    #[serde(default)]
    pub sample_dt: Option<f64>,
    pub initial: Profile,
    #[serde(default)]
    pub control: StepControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralAuditScenario {
    /// Directory written by an `h_equation` run.
    pub traj: PathBuf,
    pub s1: f64,
    pub s2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatmechTableScenario {
    #[serde(default = "one_f64")]
    pub beta: f64,
    #[serde(default = "quadratic")]
    pub p: Potential,
    #[serde(default = "minus_one")]
    pub u_min: f64,
    #[serde(default = "one_f64")]
    pub u_max: f64,
    #[serde(default = "table_steps")]
    pub u_steps: usize,
    #[serde(default = "kappa")]
    pub kappa: f64,
}

fn minus_one() -> f64 {
    -1.0
}

fn table_steps() -> usize {
    21
}

fn kappa() -> f64 {
    100.0
}

impl Default for StatmechTableScenario {
    fn default() -> Self {
        Self { beta: 1.0, p: Potential::Quadratic, u_min: -1.0, u_max: 1.0, u_steps: 21, kappa: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Parameters {
    Kmc(KmcScenario),
    Meso(MesoScenario),
    Pde(PdeScenario),
    HEquation(HEquationScenario),
    Compare(CompareConfig),
    SpectralAudit(SpectralAuditScenario),
    StatmechTable(StatmechTableScenario),
}

/// A validated run description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub parameters: Parameters,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<Scenario>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    #[serde(default)]
    parameters: toml::Table,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Scenario implied by the subcommand; must agree with the document
    /// when both are present.
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides)
    }

    /// Parses a document; `base` resolves relative file references.
    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        let scenario = match (raw.scenario, overrides.scenario) {
            (Some(a), Some(b)) if a != b => {
                return Err(HarnessError::ConfigInvalid(format!(
                    "config declares scenario `{}` but `{}` was requested",
                    a.name(),
                    b.name()
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(HarnessError::ConfigInvalid("missing `scenario`".into())),
        };
        let table = toml::Value::Table(raw.parameters);
        let parameters = parse_parameters(scenario, table, base)?;
        let config = RunConfig {
            scenario,
            seed: overrides.seed.or(raw.seed).unwrap_or(0),
            out_dir: overrides.out_dir.clone().or(raw.out_dir).unwrap_or_else(|| PathBuf::from("out")),
            parameters,
        };
        config.validate()?;
        Ok(config)
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serialises");
        hex::encode(Sha256::digest(&json))
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::ConfigInvalid(m));
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(HarnessError::ConfigInvalid(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        let sample = |dt: Option<f64>| -> Result<()> {
            match dt {
                Some(v) => positive("sample_dt", v),
                None => Ok(()),
            }
        };
        match &self.parameters {
            Parameters::Kmc(k) => {
                positive("t_final", k.t_final)?;
                sample(k.sample_dt)?;
                if k.n < 4 {
                    return bad(format!("n must be >= 4, got {}", k.n));
                }
                if k.n_reps == 0 {
                    return bad("n_reps must be >= 1".into());
                }
            }
            Parameters::Meso(m) => {
                positive("t_final", m.t_final)?;
                positive("tol", m.tol)?;
                sample(m.sample_dt)?;
            }
            Parameters::Pde(p) => {
                positive("t_final", p.t_final)?;
                sample(p.sample_dt)?;
            }
            Parameters::HEquation(h) => {
                positive("t_final", h.t_final)?;
                sample(h.sample_dt)?;
            }
            Parameters::Compare(c) => c.validate()?,
            Parameters::SpectralAudit(_) => {}
            Parameters::StatmechTable(t) => {
                if t.u_steps < 1 || !(t.u_min <= t.u_max) {
                    return bad("statmech table needs u_steps >= 1 and u_min <= u_max".into());
                }
            }
        }
        Ok(())
    }
}

fn parse_parameters(scenario: Scenario, table: toml::Value, base: &Path) -> Result<Parameters> {
    fn typed<T: serde::de::DeserializeOwned>(v: toml::Value, scenario: Scenario) -> Result<T> {
        v.try_into().map_err(|e: toml::de::Error| {
            HarnessError::ConfigInvalid(format!("[parameters] for `{}`: {}", scenario.name(), e.message()))
        })
    }
    Ok(match scenario {
        Scenario::Kmc => {
            let mut p: KmcScenario = typed(table, scenario)?;
            p.initial.resolve(base);
            Parameters::Kmc(p)
        }
        Scenario::Meso => {
            let mut p: MesoScenario = typed(table, scenario)?;
            p.initial.resolve(base);
            Parameters::Meso(p)
        }
        Scenario::Pde => {
            let mut p: PdeScenario = typed(table, scenario)?;
            p.initial.resolve(base);
            Parameters::Pde(p)
        }
        Scenario::HEquation => {
            let mut p: HEquationScenario = typed(table, scenario)?;
            p.initial.resolve(base);
            Parameters::HEquation(p)
        }
        Scenario::Compare => Parameters::Compare(typed(table, scenario)?),
        Scenario::SpectralAudit => {
            let mut p: SpectralAuditScenario = typed(table, scenario)?;
            if p.traj.is_relative() {
                p.traj = base.join(&p.traj);
            }
            Parameters::SpectralAudit(p)
        }
        Scenario::StatmechTable => Parameters::StatmechTable(typed(table, scenario)?),
    })
}

/// `dt, 2dt, …` strictly below `t_final`.
pub fn sample_grid(sample_dt: Option<f64>, t_final: f64) -> Vec<f64> {
    match sample_dt {
        None => Vec::new(),
        Some(dt) => (1..).map(|i| i as f64 * dt).take_while(|&t| t < t_final * (1.0 - 1e-12)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PDE: &str = r#"
        scenario = "pde"
        seed = 3
        [parameters]
        n_g = 32
        epsilon = 1e-3
        alpha = 0.5
        t_final = 0.01
        initial = { kind = "constant", value = 1.0 }
    "#;

    #[test]
    fn parses_and_applies_overrides() {
        let c = RunConfig::parse(PDE, Path::new("."), &Overrides::default()).unwrap();
        assert_eq!(c.scenario, Scenario::Pde);
        assert_eq!(c.seed, 3);
        let o = Overrides { seed: Some(9), out_dir: Some("x".into()), ..Default::default() };
        let c2 = RunConfig::parse(PDE, Path::new("."), &o).unwrap();
        assert_eq!((c2.seed, c2.out_dir.as_path()), (9, Path::new("x")));
        assert_ne!(c.hash(), c2.hash());
        assert_eq!(c.hash(), RunConfig::parse(PDE, Path::new("."), &Overrides::default()).unwrap().hash());
    }

    #[test]
    fn rejects_unknown_keys() {
        let top = format!("{PDE}\n");
        let bad = top.replace("seed = 3", "seed = 3\ncolour = 1");
        assert!(matches!(RunConfig::parse(&bad, Path::new("."), &Overrides::default()), Err(HarnessError::ConfigInvalid(_))));
        let bad = top.replace("alpha = 0.5", "alpha = 0.5\nbeta = 1");
        assert!(matches!(RunConfig::parse(&bad, Path::new("."), &Overrides::default()), Err(HarnessError::ConfigInvalid(_))));
        let bad = top.replace(r#"value = 1.0 }"#, r#"value = 1.0, mode = 2 }"#);
        assert!(RunConfig::parse(&bad, Path::new("."), &Overrides::default()).is_err());
    }

    #[test]
    fn scenario_mismatch_is_rejected() {
        let o = Overrides { scenario: Some(Scenario::Meso), ..Default::default() };
        assert!(RunConfig::parse(PDE, Path::new("."), &o).is_err());
    }

    #[test]
    fn profiles() {
        let p = Profile::Fourier { offset: 1.0, cos: vec![0.5], sin: vec![0.0, 0.25] };
        assert!((p.eval(0.0) - 1.5).abs() < 1e-15);
        assert!((p.eval(0.125) - (1.0 + 0.5 * (PI / 4.0).cos() + 0.25)).abs() < 1e-15);
        assert_eq!(sample_grid(Some(0.25), 1.0), vec![0.25, 0.5, 0.75]);
        assert!(sample_grid(None, 1.0).is_empty());
    }
}
