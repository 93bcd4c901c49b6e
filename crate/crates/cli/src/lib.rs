//! Command-line front end for the `mfe-core` solver: run files, the
//! `stationary`, `solve`, `table1` and `simulate` commands, and their CSV and
//! JSON output.

pub mod commands;
mod error;
pub mod output;
pub mod reference;
pub mod spec;

pub use error::{CliError, Result};
pub use output::Output;
pub use spec::{Format, ParamSpec, RunSpec, SimSpec};

/// The four commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Calibrated arrival rate and stationary law for the configured policy.
    Stationary,
    /// Grid search for approximate equilibria.
    Solve,
    /// Solve the fifteen reference cells and compare.
    Table1,
    /// Finite-population simulation of the configured policy.
    Simulate,
}

/// Runs `command` on the current rayon pool.
pub fn execute(command: Command, spec: &RunSpec) -> Result<Output> {
    Ok(match command {
        Command::Stationary => Output::Stationary(commands::stationary(spec)?),
        Command::Solve => Output::Solve(commands::solve(spec)?),
        Command::Table1 => Output::Table1(commands::table1(spec)?),
        Command::Simulate => Output::Simulate(commands::simulate_replicas(spec)?),
    })
}

/// Worker count: the flag, then `MFE_THREADS`, then the run file; `None`
/// leaves the choice to rayon.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>, spec: &RunSpec) -> Result<Option<usize>> {
    let n = match (flag, env) {
        (Some(n), _) => Some(n),
        (None, Some(v)) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("MFE_THREADS must be a positive integer, got {v:?}")))?,
        ),
        (None, None) => spec.threads,
    };
    match n {
        Some(0) => Err(CliError::Config("thread count must be >= 1".into())),
        other => Ok(other),
    }
}

/// Runs `command` on a dedicated pool of `threads` workers.
pub fn execute_with_threads(command: Command, spec: &RunSpec, threads: Option<usize>) -> Result<Output> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| execute(command, spec))
}
