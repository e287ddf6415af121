use clap::{Parser, Subcommand, ValueEnum};
use levy_ito::config::ExperimentConfig;
use levy_ito::ensemble::default_workers;
use levy_ito::runner::{self, Command, Format, RunError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulate Lévy paths and verify functional Itô formulas term by term.
///
/// Exit codes: 0 all assertions pass, 1 assertion failure,
/// 2 hypothesis violation, 3 config or usage error.
#[derive(Debug, Parser)]
#[command(name = "levy-ito", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Simulate M paths and write them as CSV with a JSON manifest.
    Simulate(Args),
    /// Run the configured verifier and report every term.
    Verify(Args),
    /// Sweep K and fit the log-log slope of the residual RMS.
    Convergence(Args),
    /// Compare local-time integral estimators on a 1-d Brownian config.
    LocaltimeCheck(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

fn execute(command: Command, args: &Args) -> Result<i32, RunError> {
    let single = command == Command::Simulate;
    let mut cfg = ExperimentConfig::load(&args.config, single)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
        cfg.validate(single)?;
    }
    let workers = args.workers.unwrap_or_else(default_workers).max(1);
    let outcome = runner::run(command, &cfg, workers)?;
    print!("{}", outcome.summary);
    let format = match args.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    let dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let written = outcome.write(&dir, format)?;
    if let Some(first) = written.first() {
        eprintln!("wrote {} file(s), first: {}", written.len(), first.display());
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, args) = match &cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Convergence(a) => (Command::Convergence, a),
        Cmd::LocaltimeCheck(a) => (Command::LocaltimeCheck, a),
    };
    match execute(command, args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
