use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mfe_cli::{execute_with_threads, resolve_threads, CliError, Command, Format, RunSpec};

/// Mean field equilibria of nomadic agents competing for location resources.
#[derive(Debug, Parser)]
#[command(name = "mfe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run file; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Write data here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; falls back to MFE_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let mut spec = match &cli.config {
        Some(path) => RunSpec::load(path)?,
        None => RunSpec::default(),
    };
    if let Some(f) = cli.format {
        spec.format = f;
    }
    if let Some(out) = cli.out {
        spec.out = Some(out);
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let env = std::env::var("MFE_THREADS").ok();
    let threads = resolve_threads(cli.threads, env.as_deref(), &spec)?;
    let output = execute_with_threads(cli.command, &spec, threads)?;
    match &spec.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut w = BufWriter::new(file);
            output.write(spec.format, &mut w)?;
            w.flush().map_err(|e| CliError::io(path, e))?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            output.write(spec.format, &mut w)?;
            w.flush().map_err(|e| CliError::Output(e.to_string()))?;
        }
    }
    Ok(!output.has_failures())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("mfe: completed with failures");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("mfe: {e}");
            ExitCode::FAILURE
        }
    }
}
