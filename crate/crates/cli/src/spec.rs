use std::fs;
use std::path::{Path, PathBuf};

use mfe_core::{ModelParams, RewardFn, SearchConfig, SimConfig, ThresholdPolicy};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Output encoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Model parameters as written in a run file; omitted fields take the
/// defaults `λ = 1`, `γ = 0.95`, `β = 20`, `μ01 = μ10 = 1`, `f(n) = 1/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSpec {
    pub lambda: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Sets both flip rates; `mu01` and `mu10` override it.
    pub mu: Option<f64>,
    pub mu01: Option<f64>,
    pub mu10: Option<f64>,
    pub reward: RewardFn,
}

impl Default for ParamSpec {
    fn default() -> Self {
        ParamSpec {
            lambda: 1.0,
            gamma: 0.95,
            beta: 20.0,
            mu: None,
            mu01: None,
            mu10: None,
            reward: RewardFn::InverseN,
        }
    }
}

impl ParamSpec {
    pub fn build(&self) -> Result<ModelParams> {
        let mu = self.mu.unwrap_or(1.0);
        Ok(ModelParams::new(
            self.lambda,
            self.gamma,
            self.beta,
            self.mu01.unwrap_or(mu),
            self.mu10.unwrap_or(mu),
            self.reward.clone(),
        )?)
    }
}

/// Simulation settings. The burn-in defaults to a fifth of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub k: usize,
    pub horizon: f64,
    pub burn_in: Option<f64>,
    pub snapshot_interval: f64,
    pub allow_self_switch: bool,
    /// Independent runs with seeds `seed, seed + 1, ...`.
    pub replicas: usize,
    /// CSV file with columns `z,n,prob` to measure total variation against.
    pub reference_pi: Option<PathBuf>,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            k: 200,
            horizon: 5000.0,
            burn_in: None,
            snapshot_interval: 100.0,
            allow_self_switch: false,
            replicas: 1,
            reference_pi: None,
        }
    }
}

/// Everything a command needs, loadable from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub params: ParamSpec,
    /// Policy for `stationary` and `simulate`.
    pub policy: ThresholdPolicy,
    pub search: SearchConfig,
    pub sim: SimSpec,
    pub seed: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            params: ParamSpec::default(),
            policy: ThresholdPolicy::always_switch(),
            search: SearchConfig::default(),
            sim: SimSpec::default(),
            seed: 0,
            format: Format::Csv,
            out: None,
            threads: None,
        }
    }
}

impl RunSpec {
    pub fn from_json(text: &str) -> Result<RunSpec> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunSpec> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        RunSpec::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The configured policy, validated.
    pub fn policy(&self) -> Result<ThresholdPolicy> {
        Ok(ThresholdPolicy::new(self.policy.n0, self.policy.n1)?)
    }

    pub fn sim_config(&self, replica: usize) -> Result<SimConfig> {
        let s = &self.sim;
        let cfg = SimConfig {
            params: self.params.build()?,
            policy: self.policy()?,
            k: s.k,
            horizon: s.horizon,
            burn_in: s.burn_in.unwrap_or(0.2 * s.horizon),
            seed: self.seed.wrapping_add(replica as u64),
            snapshot_interval: s.snapshot_interval,
            allow_self_switch: s.allow_self_switch,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
