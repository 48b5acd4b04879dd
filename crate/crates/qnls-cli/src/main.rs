//! Command line front-end: reads a JSON run configuration, evaluates the
//! requested quantities and writes deterministic CSV and JSON files.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use qnls::asym::LeadingMode;
use qnls::{QnlsError, Result};

use commands::Context;
use config::Loaded;

#[derive(Debug, Parser)]
#[command(name = "qnls", version, about = "Large time and distance asymptotics of the QNLS temperature correlation function")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the `out` entry of the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to QNLS_THREADS, then to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Evaluation mode of the leading logarithm.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<LeadingMode>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Yang-Yang solution on its grid and the Fermi points.
    Thermo,
    /// Field validation and the real roots of the jump determinant.
    Roots,
    /// Coefficients of the scalar Riemann-Hilbert problem.
    Delta,
    /// Fredholm determinant by Nystrom quadrature.
    Fredholm,
    /// Jump relations and asymptotic match of the local model.
    LocalizedCheck,
    /// Assembled asymptotic laws.
    Asym,
    /// Oracle against asymptotics with a fitted constant.
    Compare,
    /// Aggregated property checks.
    Checks,
    /// Asymptotic laws (and optionally the oracle) over a time range.
    Sweep,
}

fn parse_mode(s: &str) -> std::result::Result<LeadingMode, String> {
    s.parse().map_err(|e: QnlsError| e.to_string())
}

fn init_threads(cli: Option<usize>) -> Result<()> {
    let n = match cli {
        Some(n) => Some(n),
        None => match std::env::var("QNLS_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| QnlsError::Config(format!("QNLS_THREADS = '{v}' is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(QnlsError::Config("the thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| QnlsError::Config(format!("cannot start the thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    let path = cli
        .config
        .ok_or_else(|| QnlsError::Config("--config PATH is required".into()))?;
    let loaded = Loaded::from_path(&path)?;
    let out = cli
        .out
        .or_else(|| loaded.config.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    commands::prepare_out(&out)?;
    let mode = loaded.mode(cli.mode);
    let ctx = Context { loaded, out, mode };
    match cli.command {
        Command::Thermo => commands::thermo(&ctx),
        Command::Roots => commands::roots(&ctx),
        Command::Delta => commands::delta(&ctx),
        Command::Fredholm => commands::fredholm(&ctx),
        Command::LocalizedCheck => commands::localized_check(&ctx),
        Command::Asym => commands::asym(&ctx),
        Command::Compare => commands::compare(&ctx),
        Command::Checks => commands::checks(&ctx),
        Command::Sweep => commands::sweep(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
