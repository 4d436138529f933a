//! Experiment driver: configuration, twin experiments and result files.

mod config;
mod output;
mod run;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::error::{Error, Flag};
use crate::exec::Execution;

pub use config::{
    AdaptiveOptions, ExperimentConfig, FilterOptions, FitPceOptions, JacobianOptions, SweepOptions,
};
pub use output::{
    claim_dir, write_fit_pce, write_jacobian, write_run, write_sweep, write_twin, MARKER,
};
pub use run::{
    fit_pce, jacobian_check, run_experiment, simulate, sweep, FitPceRow, JacobianRow, ReportRow,
    RunOutput, RunSummary, StepInfo, SweepCell, Twin,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STRICT: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Truth trajectory and noisy measurement.
    Simulate,
    /// Run the configured smoother.
    Smooth,
    /// Compare basis policies against Monte-Carlo validation trajectories.
    FitPce,
    /// Forward-map estimates against finite-difference Jacobians.
    JacobianCheck,
    /// Grid of (delta_tau, noise_coef, smoother) runs.
    Sweep,
}

#[derive(Debug, Parser)]
#[command(
    name = "gnmk",
    version,
    about = "Gauss-Newton-Markov-Kalman smoothing experiments"
)]
pub struct Args {
    pub command: Command,
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides `output_dir`; default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with code 3 when a smoother step fails to converge.
    #[arg(long)]
    pub strict: bool,
    /// Disable the thread pool.
    #[arg(long)]
    pub sequential: bool,
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config { .. })
}

/// Execute one CLI invocation and return its exit code.
pub fn execute(args: &Args) -> i32 {
    let mut cfg = match &args.config {
        Some(p) => match ExperimentConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        },
        None => ExperimentConfig::default(),
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let hash = cfg.hash();
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result =
        claim_dir(&dir, &hash).and_then(|_| dispatch(args.command, &cfg, &dir, &hash, exec));
    match result {
        Ok(flags) => {
            let failures: Vec<&Flag> = flags
                .iter()
                .filter(|f| f.is_convergence_failure())
                .collect();
            for f in &failures {
                eprintln!("warning: {f:?}");
            }
            if args.strict && !failures.is_empty() {
                EXIT_STRICT
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) {
                EXIT_CONFIG
            } else {
                EXIT_FAILURE
            }
        }
    }
}

fn dispatch(
    cmd: Command,
    cfg: &ExperimentConfig,
    dir: &std::path::Path,
    hash: &str,
    exec: Execution,
) -> crate::Result<Vec<Flag>> {
    match cmd {
        Command::Simulate => {
            let twin = simulate(cfg)?;
            for p in write_twin(dir, &twin, hash)? {
                println!("wrote {}", p.display());
            }
            Ok(Vec::new())
        }
        Command::Smooth => {
            let out = run_experiment(cfg, exec)?;
            let files = write_run(dir, &out)?;
            println!(
                "{} run: coverage {:.3}, {} steps, wrote {} files to {}",
                out.summary.smoother.name(),
                out.summary.coverage,
                out.summary.steps.len(),
                files.len(),
                dir.display()
            );
            Ok(out.summary.flags)
        }
        Command::FitPce => {
            let (rows, flags) = fit_pce(cfg, exec)?;
            let p = write_fit_pce(dir, &rows, hash)?;
            println!("wrote {}", p.display());
            Ok(flags)
        }
        Command::JacobianCheck => {
            let rows = jacobian_check(cfg, exec)?;
            for r in &rows {
                println!(
                    "t={:>5} window={:>5} projection={:.3e} bayes={:.3e}",
                    r.time, r.window, r.projection, r.bayes
                );
            }
            let p = write_jacobian(dir, &rows, hash)?;
            println!("wrote {}", p.display());
            Ok(Vec::new())
        }
        Command::Sweep => {
            let cells = sweep(cfg, exec)?;
            let p = write_sweep(dir, &cells, hash)?;
            println!("wrote {}", p.display());
            Ok(cells.into_iter().flat_map(|c| c.summary.flags).collect())
        }
    }
}
