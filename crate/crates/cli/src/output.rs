use std::io::Write;

use serde::Serialize;

use crate::commands::{SimDump, SolveReport, StationaryReport, Table1Row};
use crate::error::{CliError, Result};
use crate::spec::Format;

/// Result of one command, ready to be written.
#[derive(Debug, Clone)]
pub enum Output {
    Stationary(StationaryReport),
    Solve(SolveReport),
    Table1(Vec<Table1Row>),
    Simulate(Vec<SimDump>),
}

#[derive(Serialize)]
struct StationaryCsvRow {
    z: u8,
    n: usize,
    prob: f64,
    kappa: f64,
    mean_occupancy: f64,
}

impl Output {
    /// True when part of the run failed even though data was produced.
    pub fn has_failures(&self) -> bool {
        match self {
            Output::Solve(r) => !r.skipped.is_empty(),
            Output::Table1(rows) => rows.iter().any(|r| r.error.is_some()),
            Output::Stationary(_) | Output::Simulate(_) => false,
        }
    }

    pub fn write<W: Write>(&self, format: Format, mut out: W) -> Result<()> {
        match format {
            Format::Json => {
                match self {
                    Output::Stationary(r) => serde_json::to_writer_pretty(&mut out, r)?,
                    Output::Solve(r) => serde_json::to_writer_pretty(&mut out, r)?,
                    Output::Table1(r) => serde_json::to_writer_pretty(&mut out, r)?,
                    Output::Simulate(r) => serde_json::to_writer_pretty(&mut out, r)?,
                }
                writeln!(out).map_err(|e| CliError::Output(e.to_string()))?;
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(&mut out);
                match self {
                    Output::Stationary(r) => {
                        for p in &r.pi {
                            w.serialize(StationaryCsvRow {
                                z: p.z,
                                n: p.n,
                                prob: p.prob,
                                kappa: r.kappa,
                                mean_occupancy: r.mean_occupancy,
                            })?;
                        }
                    }
                    Output::Solve(r) => {
                        for c in &r.candidates {
                            w.serialize(&c.row)?;
                        }
                    }
                    Output::Table1(rows) => {
                        for row in rows {
                            w.serialize(row)?;
                        }
                    }
                    Output::Simulate(rows) => {
                        for d in rows {
                            w.serialize(&d.row)?;
                        }
                    }
                }
                w.flush().map_err(|e| CliError::Output(e.to_string()))?;
            }
        }
        Ok(())
    }
}
