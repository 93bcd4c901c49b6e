use std::fs::File;
use std::io::BufReader;

use mfe_core::equilibrium::{PayoffBounds, SkippedCell};
use mfe_core::{
    calibrate_kappa, mean_occupancy, search, simulate, welfare, Distribution, EquilibriumCandidate, ModelParams,
    Resource, SearchOutcome, SimResult, ThresholdBox, Truncation,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::reference::{read_distribution, table1_reference};
use crate::spec::RunSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PiEntry {
    pub z: u8,
    pub n: usize,
    pub prob: f64,
}

pub(crate) fn pi_entries(pi: &Distribution) -> Vec<PiEntry> {
    pi.iter()
        .map(|(z, n, prob)| PiEntry {
            z: z.index() as u8,
            n,
            prob,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryReport {
    pub n0: f64,
    pub n1: f64,
    pub kappa: f64,
    pub mean_occupancy: f64,
    pub high_fraction: f64,
    pub nmax: usize,
    pub boundary_mass: f64,
    pub pi: Vec<PiEntry>,
}

pub fn stationary(spec: &RunSpec) -> Result<StationaryReport> {
    let params = spec.params.build()?;
    let policy = spec.policy()?;
    let cal = calibrate_kappa(&params, &policy, Truncation::new(spec.search.nmax)?, spec.search.tol)?;
    eprintln!(
        "stationary: policy ({}, {}) kappa {} mean occupancy {}",
        policy.n0,
        policy.n1,
        cal.kappa,
        mean_occupancy(&cal.pi)
    );
    Ok(StationaryReport {
        n0: policy.n0,
        n1: policy.n1,
        kappa: cal.kappa,
        mean_occupancy: mean_occupancy(&cal.pi),
        high_fraction: cal.pi.high_marginal(),
        nmax: cal.trunc.nmax,
        boundary_mass: cal.boundary_mass,
        pi: pi_entries(&cal.pi),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateRow {
    pub rank: usize,
    pub n0: f64,
    pub n1: f64,
    pub c: f64,
    pub kappa: f64,
    pub c_tilde: f64,
    pub dist: f64,
    pub d: f64,
    pub box_lo0: f64,
    pub box_hi0: f64,
    pub box_lo1: f64,
    pub box_hi1: f64,
    pub level: usize,
}

impl CandidateRow {
    fn new(rank: usize, c: &EquilibriumCandidate) -> Self {
        let b: &ThresholdBox = &c.thresholds;
        CandidateRow {
            rank,
            n0: c.policy.n0,
            n1: c.policy.n1,
            c: c.c,
            kappa: c.kappa,
            c_tilde: c.c_tilde,
            dist: c.dist,
            d: c.d,
            box_lo0: b.lo[0],
            box_hi0: b.hi[0],
            box_lo1: b.lo[1],
            box_hi1: b.hi[1],
            level: c.level,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateDump {
    #[serde(flatten)]
    pub row: CandidateRow,
    pub pi: Vec<PiEntry>,
    /// `V̂(z, n)` for `n = 1..=nmax`, as `[z = 0, z = 1]` pairs.
    pub vhat: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub degenerate: bool,
    pub bounds: PayoffBounds,
    pub threshold_bound: Option<u64>,
    pub evaluated: usize,
    pub level_best: Vec<f64>,
    pub skipped: Vec<SkippedCell>,
    pub candidates: Vec<CandidateDump>,
}

impl SolveReport {
    fn new(outcome: &SearchOutcome, rows: usize) -> Self {
        let candidates = outcome
            .ranked
            .iter()
            .take(rows)
            .enumerate()
            .map(|(i, c)| CandidateDump {
                row: CandidateRow::new(i + 1, c),
                pi: pi_entries(&c.pi),
                vhat: (1..=c.vf.nmax())
                    .map(|n| [c.vf.vhat(Resource::Low, n), c.vf.vhat(Resource::High, n)])
                    .collect(),
            })
            .collect();
        SolveReport {
            degenerate: outcome.degenerate,
            bounds: outcome.bounds,
            threshold_bound: outcome.threshold_bound,
            evaluated: outcome.evaluated,
            level_best: outcome.level_best.clone(),
            skipped: outcome.skipped.clone(),
            candidates,
        }
    }

    pub fn head(&self) -> Option<&CandidateRow> {
        self.candidates.first().map(|c| &c.row)
    }
}

fn run_search(params: &ModelParams, spec: &RunSpec) -> Result<SearchOutcome> {
    let outcome = search(params, &spec.search)?;
    if outcome.degenerate {
        eprintln!("solve: reward is identically zero; no positive payoff is self-consistent (degenerate)");
    }
    for s in &outcome.skipped {
        eprintln!("solve: skipped ({}, {}) at C = {:?}: {}", s.n0, s.n1, s.c, s.reason);
    }
    Ok(outcome)
}

pub fn solve(spec: &RunSpec) -> Result<SolveReport> {
    let params = spec.params.build()?;
    let outcome = run_search(&params, spec)?;
    let report = SolveReport::new(&outcome, spec.search.top_q);
    eprintln!(
        "solve: {} points scored, best d per level {:?}",
        report.evaluated, report.level_best
    );
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub reward: String,
    pub mu: f64,
    pub ref_c: f64,
    pub ref_n0: f64,
    pub ref_n1: f64,
    pub c: Option<f64>,
    pub n0: Option<f64>,
    pub n1: Option<f64>,
    pub kappa: Option<f64>,
    pub c_tilde: Option<f64>,
    pub dist: Option<f64>,
    pub d: Option<f64>,
    pub dev_c: Option<f64>,
    pub dev_n0: Option<f64>,
    pub dev_n1: Option<f64>,
    pub error: Option<String>,
}

/// Solves the fifteen reference cells with the model parameters of `spec`
/// (the flip rates are replaced by each cell's symmetric `μ`). A failing cell
/// is reported in its row and does not stop the run.
pub fn table1(spec: &RunSpec) -> Result<Vec<Table1Row>> {
    let base = &spec.params;
    let mut rows = Vec::new();
    for cell in table1_reference() {
        let mut row = Table1Row {
            reward: cell.reward.label().to_string(),
            mu: cell.mu,
            ref_c: cell.c,
            ref_n0: cell.n0,
            ref_n1: cell.n1,
            c: None,
            n0: None,
            n1: None,
            kappa: None,
            c_tilde: None,
            dist: None,
            d: None,
            dev_c: None,
            dev_n0: None,
            dev_n1: None,
            error: None,
        };
        let solved = ModelParams::new(
            base.lambda,
            base.gamma,
            base.beta,
            cell.mu,
            cell.mu,
            cell.reward.clone(),
        )
        .map_err(CliError::from)
        .and_then(|p| run_search(&p, spec));
        match solved {
            Ok(outcome) => match outcome.head() {
                Some(h) => {
                    row.c = Some(h.c);
                    row.n0 = Some(h.policy.n0);
                    row.n1 = Some(h.policy.n1);
                    row.kappa = Some(h.kappa);
                    row.c_tilde = Some(h.c_tilde);
                    row.dist = Some(h.dist);
                    row.d = Some(h.d);
                    row.dev_c = Some((h.c - cell.c).abs());
                    row.dev_n0 = Some((h.policy.n0 - cell.n0).abs());
                    row.dev_n1 = Some((h.policy.n1 - cell.n1).abs());
                    eprintln!(
                        "table1: f = {} mu = {}: ({}, {}) C = {} d = {}",
                        row.reward, cell.mu, h.policy.n0, h.policy.n1, h.c, h.d
                    );
                }
                None => row.error = Some("no candidate could be scored".into()),
            },
            Err(e) => row.error = Some(e.to_string()),
        }
        if let Some(e) = &row.error {
            eprintln!("table1: f = {} mu = {} failed: {e}", row.reward, cell.mu);
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimRow {
    pub seed: u64,
    pub k: usize,
    pub agents: usize,
    pub horizon: f64,
    pub burn_in: f64,
    pub mean_reward_per_epoch: f64,
    pub welfare: f64,
    pub high_fraction: f64,
    pub mean_occupancy: f64,
    pub decisions: u64,
    pub departures: u64,
    pub switches: u64,
    pub flips: u64,
    pub tv: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimDump {
    #[serde(flatten)]
    pub row: SimRow,
    pub empirical: Vec<PiEntry>,
    pub snapshots: Vec<mfe_core::sim::Snapshot>,
}

/// Runs the configured replicas in parallel; rows come back in seed order.
pub fn simulate_replicas(spec: &RunSpec) -> Result<Vec<SimDump>> {
    if spec.sim.replicas == 0 {
        return Err(CliError::Config("sim.replicas must be >= 1".into()));
    }
    let reference = match &spec.sim.reference_pi {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::io(path, e))?;
            Some(read_distribution(BufReader::new(file))?)
        }
        None => None,
    };
    let configs = (0..spec.sim.replicas)
        .map(|r| spec.sim_config(r))
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<(u64, f64, f64, SimResult)> = configs
        .par_iter()
        .map(|cfg| Ok((cfg.seed, cfg.horizon, cfg.burn_in, simulate(cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    let dumps = results
        .into_iter()
        .map(|(seed, horizon, burn_in, r)| {
            let row = SimRow {
                seed,
                k: r.k,
                agents: r.agents,
                horizon,
                burn_in,
                mean_reward_per_epoch: r.mean_reward_per_epoch,
                welfare: welfare(&r),
                high_fraction: r.empirical.high_marginal(),
                mean_occupancy: mean_occupancy(&r.empirical),
                decisions: r.events.decisions,
                departures: r.events.departures,
                switches: r.events.switches,
                flips: r.events.flips,
                tv: reference.as_ref().map(|pi| r.tv_to(pi)),
            };
            eprintln!(
                "simulate: seed {} K = {} welfare {} tv {:?}",
                row.seed, row.k, row.welfare, row.tv
            );
            SimDump {
                row,
                empirical: pi_entries(&r.empirical),
                snapshots: r.snapshots,
            }
        })
        .collect();
    Ok(dumps)
}
