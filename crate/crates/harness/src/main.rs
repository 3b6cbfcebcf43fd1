use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crystalflow_core::lattice::Potential;
use crystalflow_core::spectral::critical_threshold;
use crystalflow_harness::config::{
    Overrides, Parameters, RunConfig, Scenario, SpectralAuditScenario, StatmechTableScenario,
};
use crystalflow_harness::scenarios::{run, spectral_audit, statmech_table, STATMECH_HEADER};
use crystalflow_harness::{configure_threads, HarnessError, Result};

/// Multiscale crystal surface simulations and audits.
#[derive(Debug, Parser)]
#[command(name = "crystalflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs whatever scenario the configuration names.
    Run(RunArgs),
    /// Kinetic Monte Carlo ensemble.
    Kmc(RunArgs),
    /// Mesoscale ODE system.
    Meso {
        #[command(subcommand)]
        action: RunOnly,
    },
    /// Regularised continuum flow with functional audits.
    Pde {
        #[command(subcommand)]
        action: RunOnly,
    },
    /// Continuum height equation with spectral norms and snapshots.
    HEquation(RunArgs),
    /// Cross-scale comparison (KMC ladder and meso sweep).
    Compare(RunArgs),
    /// Tilted Gibbs ensemble tables.
    Statmech {
        #[command(subcommand)]
        action: StatmechAction,
    },
    /// Fourier-side audits.
    Spectral {
        #[command(subcommand)]
        action: SpectralAction,
    },
}

#[derive(Debug, Subcommand)]
enum RunOnly {
    Run(RunArgs),
}

#[derive(Debug, Subcommand)]
enum StatmechAction {
    /// CSV of (u, eta_star, sigma_D, kappa_scaled); printed unless --out is given.
    Table {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        p: Option<u8>,
        #[arg(long, allow_hyphen_values = true)]
        u_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        u_max: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum SpectralAction {
    /// Lyapunov and decay audits of an h_equation trajectory directory.
    Audit {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        s1: f64,
        #[arg(long, allow_hyphen_values = true)]
        s2: f64,
        /// Also write audit.json and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prints the critical threshold y_s* with 12 decimals.
    Threshold {
        #[arg(long, allow_hyphen_values = true)]
        s: f64,
    },
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(HarnessError::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn run_file(args: &RunArgs, scenario: Option<Scenario>) -> Result<()> {
    let overrides = Overrides { scenario, seed: args.seed, out_dir: args.out.clone() };
    let config = RunConfig::load(&args.config, &overrides)?;
    let summary = run(&config)?;
    eprintln!(
        "{}: {} files in {} ({:.3} s)",
        summary.manifest.scenario,
        summary.manifest.outputs.len() + 1,
        summary.out_dir.display(),
        summary.manifest.wall_time_seconds
    );
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(a) => run_file(&a, None),
        Command::Kmc(a) => run_file(&a, Some(Scenario::Kmc)),
        Command::Meso { action: RunOnly::Run(a) } => run_file(&a, Some(Scenario::Meso)),
        Command::Pde { action: RunOnly::Run(a) } => run_file(&a, Some(Scenario::Pde)),
        Command::HEquation(a) => run_file(&a, Some(Scenario::HEquation)),
        Command::Compare(a) => run_file(&a, Some(Scenario::Compare)),
        Command::Statmech { action: StatmechAction::Table { config, beta, p, u_min, u_max, steps, kappa, out } } => {
            let mut table = match &config {
                Some(path) => {
                    let o = Overrides { scenario: Some(Scenario::StatmechTable), ..Default::default() };
                    match RunConfig::load(path, &o)?.parameters {
                        Parameters::StatmechTable(t) => t,
                        _ => unreachable!("scenario checked by the loader"),
                    }
                }
                None => StatmechTableScenario::default(),
            };
            table.beta = beta.unwrap_or(table.beta);
            if let Some(p) = p {
                table.p = Potential::try_from(p).map_err(HarnessError::ConfigInvalid)?;
            }
            table.u_min = u_min.unwrap_or(table.u_min);
            table.u_max = u_max.unwrap_or(table.u_max);
            table.u_steps = steps.unwrap_or(table.u_steps);
            table.kappa = kappa.unwrap_or(table.kappa);
            match out {
                Some(dir) => {
                    let config = RunConfig {
                        scenario: Scenario::StatmechTable,
                        seed: 0,
                        out_dir: dir,
                        parameters: Parameters::StatmechTable(table),
                    };
                    run(&config).map(|_| ())
                }
                None => {
                    let mut text = STATMECH_HEADER.join(",") + "\n";
                    for row in statmech_table(&table)? {
                        text += &(row.join(",") + "\n");
                    }
                    emit(&text)
                }
            }
        }
        Command::Spectral { action: SpectralAction::Audit { traj, s1, s2, out } } => {
            let params = SpectralAuditScenario { traj, s1, s2 };
            match out {
                Some(dir) => {
                    let config = RunConfig {
                        scenario: Scenario::SpectralAudit,
                        seed: 0,
                        out_dir: dir,
                        parameters: Parameters::SpectralAudit(params),
                    };
                    run(&config).map(|_| ())
                }
                None => {
                    let audit = spectral_audit(&params)?;
                    emit(&(serde_json::to_string_pretty(&audit).expect("audit serialises") + "\n"))
                }
            }
        }
        Command::Spectral { action: SpectralAction::Threshold { s } } => {
            let y = critical_threshold(s)?;
            emit(&format!("{y:.12}\n"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|_| execute(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
