use std::io::{Read, Write};

use mfe_core::{Distribution, RewardFn};
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Reference approximate equilibrium for one `(f, μ)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCell {
    pub reward: RewardFn,
    pub mu: f64,
    pub c: f64,
    pub n0: f64,
    pub n1: f64,
}

/// `(C, n0, n1)`.
type Point = (f64, f64, f64);

pub const TABLE1_MUS: [f64; 5] = [0.1, 0.5, 1.0, 10.0, 100.0];

/// Reported `(C, n0, n1)` for `λ = 1`, `γ = 0.95`, `β = 20` and symmetric
/// flip rates `μ`, rows in the order of [`TABLE1_MUS`].
pub fn table1_reference() -> Vec<ReferenceCell> {
    let rows: [(RewardFn, [Point; 5]); 3] = [
        (
            RewardFn::InverseSqrtN,
            [
                (2.80, 1.0, 43.9),
                (2.39, 4.3, 43.8),
                (2.63, 1.0, 27.2),
                (2.37, 11.0, 18.2),
                (2.46, 11.0, 12.0),
            ],
        ),
        (
            RewardFn::InverseN,
            [
                (1.98, 1.0, 4.0),
                (1.72, 1.0, 4.0),
                (0.96, 1.0, 10.4),
                (0.93, 4.0, 7.1),
                (0.97, 4.0, 4.0),
            ],
        ),
        (
            RewardFn::InverseNSquared,
            [
                (0.14, 1.0, 7.7),
                (0.25, 1.0, 4.7),
                (0.18, 1.0, 5.0),
                (0.16, 3.0, 5.0),
                (0.80, 1.0, 8.0),
            ],
        ),
    ];
    rows.into_iter()
        .flat_map(|(reward, cells)| {
            TABLE1_MUS
                .into_iter()
                .zip(cells)
                .map(move |(mu, (c, n0, n1))| ReferenceCell {
                    reward: reward.clone(),
                    mu,
                    c,
                    n0,
                    n1,
                })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct PiRow {
    z: u8,
    n: usize,
    prob: f64,
}

/// Reads a distribution from CSV with (at least) the columns `z,n,prob`.
/// Missing states have zero mass; the masses must sum to one.
pub fn read_distribution<R: Read>(input: R) -> Result<Distribution> {
    let mut reader = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<PiRow>().enumerate() {
        let row = row.map_err(|e| CliError::Reference(format!("row {}: {e}", i + 1)))?;
        if row.z > 1 {
            return Err(CliError::Reference(format!(
                "row {}: z must be 0 or 1, got {}",
                i + 1,
                row.z
            )));
        }
        if !(row.prob.is_finite() && row.prob >= 0.0) {
            return Err(CliError::Reference(format!(
                "row {}: bad probability {}",
                i + 1,
                row.prob
            )));
        }
        rows.push(row);
    }
    let (Some(first), Some(last)) = (rows.iter().map(|r| r.n).min(), rows.iter().map(|r| r.n).max()) else {
        return Err(CliError::Reference("no rows".into()));
    };
    let mut weights = vec![[0.0; 2]; last - first + 1];
    for r in &rows {
        weights[r.n - first][r.z as usize] += r.prob;
    }
    let total: f64 = weights.iter().flatten().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(CliError::Reference(format!("probabilities sum to {total}, not 1")));
    }
    Distribution::from_weights(first, weights).map_err(|e| CliError::Reference(e.to_string()))
}

/// Writes `z,n,prob` rows, the format read back by [`read_distribution`].
pub fn write_distribution<W: Write>(pi: &Distribution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["z", "n", "prob"])?;
    for (z, n, p) in pi.iter() {
        w.write_record([z.index().to_string(), n.to_string(), p.to_string()])?;
    }
    w.flush().map_err(|e| CliError::Output(e.to_string()))?;
    Ok(())
}
