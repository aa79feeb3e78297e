use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use schl_cli::{run_experiment, Command, ExperimentConfig, RunOptions, THREADS_ENV};

/// Config-driven runner for semi-classical Hartree experiments.
///
/// Exit codes: 0 success, 1 failed checks, 2 invalid config,
/// 3 boundary contamination, 4 numerical divergence.
#[derive(Parser, Debug)]
#[command(name = "schl", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue `run-hartree` from the last checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Worker threads; overrides SCHL_THREADS. Defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Use the unnormalized coherent states in Toeplitz quantization.
    #[arg(long)]
    paper_literal: bool,
    #[arg(long)]
    quiet: bool,
    #[arg(long, hide = true)]
    halt_after: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads.filter(|n| *n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("schl: {e}");
        }
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("schl: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("schl: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let opts = RunOptions {
        out: cli.out,
        resume: cli.resume,
        paper_literal: cli.paper_literal,
        quiet: cli.quiet,
        halt_after: cli.halt_after,
    };
    match run_experiment(&text, &cfg, cli.command, &opts) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("schl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
