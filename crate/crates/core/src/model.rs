//! Exogenous parameters, reward functions and threshold policies.
//!
//! A location carries a two-level resource `z ∈ {0, 1}` and some number of
//! agents `n`. An agent at a decision epoch collects `z · f(n)` where `n`
//! counts the agent itself, so `f` is only ever evaluated at `n ≥ 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Resource level of a location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Resource {
    Low = 0,
    High = 1,
}

impl Resource {
    pub const ALL: [Resource; 2] = [Resource::Low, Resource::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(z: usize) -> Option<Resource> {
        match z {
            0 => Some(Resource::Low),
            1 => Some(Resource::High),
            _ => None,
        }
    }

    pub fn flip(self) -> Resource {
        match self {
            Resource::Low => Resource::High,
            Resource::High => Resource::Low,
        }
    }

    /// The resource as a multiplier on `f(n)`.
    pub fn level(self) -> f64 {
        self.index() as f64
    }
}

/// Non-increasing, nonnegative reward table `f(1), f(2), ...`; `f(n) = 0`
/// past the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RewardTable(Vec<f64>);

impl RewardTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(
                "reward",
                format!("table entry {v} is not a finite nonnegative number"),
            ));
        }
        if let Some(w) = values.windows(2).find(|w| w[1] > w[0]) {
            return Err(invalid(
                "reward",
                format!("table must be non-increasing, found {} followed by {}", w[0], w[1]),
            ));
        }
        Ok(RewardTable(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for RewardTable {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        RewardTable::new(values)
    }
}

impl From<RewardTable> for Vec<f64> {
    fn from(table: RewardTable) -> Vec<f64> {
        table.0
    }
}

/// Per-agent reward `f(n)` at a resource-rich location holding `n` agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFn {
    InverseN,
    InverseNSquared,
    InverseSqrtN,
    Table(RewardTable),
}

impl RewardFn {
    /// `f(n)` for `n ≥ 1`.
    ///
    /// Panics on `n = 0`; use [`reward_eval`] for a checked call.
    #[inline]
    pub fn f(&self, n: usize) -> f64 {
        assert!(n >= 1, "reward evaluated at n = 0");
        let x = n as f64;
        match self {
            RewardFn::InverseN => 1.0 / x,
            RewardFn::InverseNSquared => 1.0 / (x * x),
            RewardFn::InverseSqrtN => 1.0 / x.sqrt(),
            RewardFn::Table(t) => t.0.get(n - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RewardFn::InverseN => "1/n",
            RewardFn::InverseNSquared => "1/n^2",
            RewardFn::InverseSqrtN => "1/sqrt(n)",
            RewardFn::Table(_) => "table",
        }
    }

    /// True when `f(n) = 0` for every `n`.
    pub fn is_zero(&self) -> bool {
        matches!(self, RewardFn::Table(t) if t.0.iter().all(|v| *v == 0.0))
    }
}

impl fmt::Display for RewardFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RewardFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inverse_n" | "1/n" => Ok(RewardFn::InverseN),
            "inverse_n_squared" | "1/n^2" | "1/n2" => Ok(RewardFn::InverseNSquared),
            "inverse_sqrt_n" | "1/sqrt(n)" | "1/sqrtn" => Ok(RewardFn::InverseSqrtN),
            "zero" => Ok(RewardFn::Table(RewardTable(Vec::new()))),
            other => Err(invalid("reward", format!("unknown reward function `{other}`"))),
        }
    }
}

/// Checked reward `z · f(n)`.
pub fn reward_eval(f: &RewardFn, z: Resource, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyLocation);
    }
    Ok(z.level() * f.f(n))
}

/// Exogenous model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Rate of each agent's decision epochs.
    pub lambda: f64,
    /// Probability of surviving a decision epoch.
    pub gamma: f64,
    /// Agents per location.
    pub beta: f64,
    /// Resource flip rate 0 → 1.
    pub mu01: f64,
    /// Resource flip rate 1 → 0.
    pub mu10: f64,
    pub reward: RewardFn,
}

impl ModelParams {
    pub fn new(lambda: f64, gamma: f64, beta: f64, mu01: f64, mu10: f64, reward: RewardFn) -> Result<Self> {
        let params = ModelParams {
            lambda,
            gamma,
            beta,
            mu01,
            mu10,
            reward,
        };
        params.validate()?;
        Ok(params)
    }

    /// λ = 1, γ = 0.95, β = 20 with symmetric flip rate `mu`.
    pub fn symmetric(mu: f64, reward: RewardFn) -> Result<Self> {
        ModelParams::new(1.0, 0.95, 20.0, mu, mu, reward)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("mu01", self.mu01),
            ("mu10", self.mu10),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {value}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        Ok(())
    }

    /// Rate at which a location at level `z` leaves it.
    #[inline]
    pub fn flip_rate(&self, z: Resource) -> f64 {
        match z {
            Resource::Low => self.mu01,
            Resource::High => self.mu10,
        }
    }

    /// Long-run fraction of time a location spends at `z = 1`.
    pub fn high_fraction(&self) -> f64 {
        self.mu01 / (self.mu01 + self.mu10)
    }
}

/// Threshold strategy `(n0, n1)`: at a location with resource `z` and `n`
/// agents, stay if `n < ⌊n_z⌋`, switch if `n > n_z`, and at `n = ⌊n_z⌋`
/// stay with probability `n_z − ⌊n_z⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub n0: f64,
    pub n1: f64,
}

impl ThresholdPolicy {
    pub fn new(n0: f64, n1: f64) -> Result<Self> {
        for (name, v) in [("n0", n0), ("n1", n1)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("threshold must be finite and >= 0, got {v}")));
            }
        }
        Ok(ThresholdPolicy { n0, n1 })
    }

    /// Switch whenever a decision epoch occurs.
    pub fn always_switch() -> Self {
        ThresholdPolicy { n0: 0.0, n1: 0.0 }
    }

    /// Never switch anywhere in a state space truncated at `nmax`.
    pub fn never_switch(nmax: usize) -> Self {
        let n = (nmax + 1) as f64;
        ThresholdPolicy { n0: n, n1: n }
    }

    #[inline]
    pub fn threshold(&self, z: Resource) -> f64 {
        match z {
            Resource::Low => self.n0,
            Resource::High => self.n1,
        }
    }

    #[inline]
    pub fn switch_probability(&self, z: Resource, n: usize) -> f64 {
        switch_probability_at(self.threshold(z), n)
    }

    /// Largest `⌈n_z⌉` over both levels.
    pub fn max_ceil(&self) -> usize {
        self.n0.max(self.n1).ceil() as usize
    }
}

/// Switching probability of a threshold `nz` at occupancy `n`.
#[inline]
pub fn switch_probability_at(nz: f64, n: usize) -> f64 {
    let x = n as f64;
    let floor = nz.floor();
    if x > nz {
        1.0
    } else if x < floor {
        0.0
    } else {
        floor + 1.0 - nz
    }
}
