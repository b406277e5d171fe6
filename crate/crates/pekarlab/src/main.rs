//! Batch runner. Exit codes: 0 success, 2 non-convergence (artifacts still
//! written), 1 usage or configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pekarlab::config::{Overrides, RunConfig, TaskKind};
use pekarlab::{tasks, Error};

/// Variational runs for N particles with Coulomb repulsion and a self-induced
/// attraction in a constant magnetic field: solves, scans, and numerical
/// verification suites with deterministic artifacts.
#[derive(Parser)]
#[command(name = "pekarlab", version, disable_help_subcommand = true)]
struct Cli {
    /// One of: solve, scan-alpha, scan-B, binding, multipole-verify,
    /// ims-check, decay-fit, oracle-2body
    task: String,

    /// Path to the key = value config file
    #[arg(long)]
    config: PathBuf,

    /// Output directory (overrides `[run] out`)
    #[arg(long)]
    out: Option<PathBuf>,

    /// RNG seed (overrides `[run] seed`)
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads for independent scan points
    /// (default: PEKARLAB_JOBS, then 1; never changes any number)
    #[arg(long)]
    jobs: Option<usize>,
}

fn effective_jobs(cli_jobs: Option<usize>) -> pekarlab::Result<usize> {
    if let Some(j) = cli_jobs {
        return Ok(j.max(1));
    }
    match std::env::var("PEKARLAB_JOBS") {
        Ok(s) => s.trim().parse::<usize>().map(|j| j.max(1)).map_err(|_| {
            Error::Usage(format!(
                "bad value for PEKARLAB_JOBS: expected a positive integer, got '{s}'"
            ))
        }),
        Err(_) => Ok(1),
    }
}

fn run(cli: Cli) -> pekarlab::Result<tasks::TaskOutcome> {
    let task = TaskKind::parse(&cli.task)?;
    let jobs = effective_jobs(cli.jobs)?;
    let text = std::fs::read_to_string(&cli.config).map_err(|e| {
        Error::Usage(format!(
            "cannot read config file '{}': {e}",
            cli.config.display()
        ))
    })?;
    let cfg = RunConfig::from_text(
        &text,
        task,
        &Overrides {
            out: cli.out,
            seed: cli.seed,
        },
    )?;
    tasks::run(&cfg, jobs)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap's own rendering for --help/--version and argument errors,
            // but with the documented exit codes (1 for usage problems)
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!("report: {}", outcome.report_path.display());
            if outcome.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("pekarlab: run finished without convergence (artifacts written)");
                ExitCode::from(2)
            }
        }
        Err(e @ Error::NonConvergence(_)) => {
            eprintln!("pekarlab: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("pekarlab: {e}");
            ExitCode::from(1)
        }
    }
}
