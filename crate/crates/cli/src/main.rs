use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tnhvp_cli::pipeline::{check_derivatives, evaluate_test_risk, run_experiment, spectral_report, write_spectrum};
use tnhvp_cli::{CliError, ExperimentConfig, PoolExecutor};

/// Riemannian circuit compression with analytic Hessian-vector products.
#[derive(Parser)]
#[command(name = "tnhvp", version)]
struct Cli {
    /// Worker threads for per-sample work (overrides TNHVP_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate samples, optimize, evaluate on the test set and write artifacts.
    Run {
        config: PathBuf,
        /// Output directory (default: [output] directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Test-set risk of a checkpoint (or of the initial ansatz).
    Eval {
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Accept a checkpoint produced under a different config hash.
        #[arg(long)]
        force: bool,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dense Riemannian Hessian spectrum and CG probe.
    Spectrum {
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        /// Directory for spectrum.json, eigenvalues.csv and cg_probe.csv.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Finite-difference audit of the gradient and HVP on the configured instance.
    CheckDerivatives {
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        coords: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn emit<T: serde::Serialize>(v: &T, out: Option<&Path>) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(v).expect("report serializes") + "\n";
    match out {
        Some(p) => std::fs::write(p, s).map_err(|e| CliError::io(p.display(), e)),
        None => {
            print!("{s}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let exec = PoolExecutor::from_env(cli.workers)?;
    match cli.command {
        Command::Run { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = run_experiment(&cfg, out_dir.as_deref(), &exec)?;
            let s = &out.summary;
            println!(
                "{}: {} iterations ({:?}), train risk {:.6e} -> {:.6e}, test risk {:.6e} -> {:.6e}; artifacts in {}",
                s.optimizer,
                s.iterations,
                s.stop_reason,
                s.initial_train_risk,
                s.final_train_risk,
                s.initial_test_risk,
                s.final_test_risk,
                out.directory.display()
            );
            Ok(())
        }
        Command::Eval { config, checkpoint, force, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            emit(&evaluate_test_risk(&cfg, checkpoint.as_deref(), force, &exec)?, out.as_deref())
        }
        Command::Spectrum { config, checkpoint, force, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = spectral_report(&cfg, checkpoint.as_deref(), force, &exec)?;
            let dir = out_dir.unwrap_or_else(|| cfg.output.directory.clone());
            write_spectrum(&dir, &s)?;
            println!(
                "dim {}: condition {:.3e}, {} negative, CG reaches {:.1}% of its decrease in {} iterations; written to {}",
                s.dim,
                s.report.condition_number,
                s.report.n_negative,
                100.0 * s.cg.quarter_decrease_fraction,
                s.cg.quarter_iters,
                dir.display()
            );
            Ok(())
        }
        Command::CheckDerivatives { config, coords, eps, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = check_derivatives(&cfg, coords, eps, seed, &exec)?;
            emit(&r, None)?;
            if r.passed {
                Ok(())
            } else {
                Err(CliError::Numeric("derivative check exceeded its tolerances".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tnhvp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
