//! Finite-population event simulation.
//!
//! `N = round(βK)` agents move among `K` locations. Every location's resource
//! flips after exponential holding times and every agent has a rate-λ clock.
//! At a tick the agent collects `z f(n)` (counting herself), leaves with
//! probability `1 − γ` and is replaced by a fresh agent at a uniformly random
//! location, or otherwise applies the threshold policy to the current `(z, n)`.
//!
//! The next event is drawn from the superposition of all clocks, whose total
//! rate only changes at events, and then attributed to an agent or a
//! location.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::chain::Distribution;
use crate::error::{invalid, Result};
use crate::model::{ModelParams, Resource, ThresholdPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub policy: ThresholdPolicy,
    /// Number of locations.
    pub k: usize,
    pub horizon: f64,
    /// Statistics are collected on `[burn_in, horizon]`.
    pub burn_in: f64,
    pub seed: u64,
    /// Spacing of the coarse state snapshots kept in the result.
    pub snapshot_interval: f64,
    /// Let a switching agent draw its current location again.
    #[serde(default)]
    pub allow_self_switch: bool,
}

impl SimConfig {
    pub fn agents(&self) -> usize {
        (self.params.beta * self.k as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.k == 0 {
            return Err(invalid("k", "need at least one location"));
        }
        if self.agents() == 0 {
            return Err(invalid("k", "round(beta * k) must be at least one agent"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("horizon", "must be finite and > 0"));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.horizon) {
            return Err(invalid("burn_in", "must satisfy 0 <= burn_in < horizon"));
        }
        if !(self.snapshot_interval.is_finite() && self.snapshot_interval > 0.0) {
            return Err(invalid("snapshot_interval", "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub decisions: u64,
    pub departures: u64,
    pub switches: u64,
    pub flips: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    /// Fraction of locations at `z = 1`.
    pub high_fraction: f64,
    /// Fraction of empty locations.
    pub empty_fraction: f64,
    pub max_occupancy: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub k: usize,
    pub agents: usize,
    /// Time-averaged fraction of locations in each `(z, n)` after burn-in.
    pub empirical: Distribution,
    /// Reward per decision epoch after burn-in.
    pub mean_reward_per_epoch: f64,
    /// Reward collected per unit time per location after burn-in.
    pub total_welfare_rate: f64,
    /// Counts over the whole run, burn-in included.
    pub events: EventCounts,
    pub snapshots: Vec<Snapshot>,
}

impl SimResult {
    pub fn tv_to(&self, pi: &Distribution) -> f64 {
        self.empirical.total_variation(pi)
    }
}

/// Reward collected per unit time, per location.
pub fn welfare(result: &SimResult) -> f64 {
    result.total_welfare_rate
}

/// Locations at each resource level, with O(1) removal by position.
struct LevelSets {
    members: [Vec<u32>; 2],
    slot: Vec<u32>,
}

impl LevelSets {
    fn insert(&mut self, z: usize, k: u32) {
        self.slot[k as usize] = self.members[z].len() as u32;
        self.members[z].push(k);
    }

    fn remove(&mut self, z: usize, k: u32) {
        let at = self.slot[k as usize] as usize;
        let moved = self.members[z].swap_remove(at);
        debug_assert_eq!(moved, k);
        if at < self.members[z].len() {
            let other = self.members[z][at];
            self.slot[other as usize] = at as u32;
        }
    }
}

/// Number of locations in each `(z, n)` and their time integrals.
struct Occupancy {
    count: [Vec<u64>; 2],
    area: [Vec<f64>; 2],
    since: [Vec<f64>; 2],
    burn_in: f64,
}

impl Occupancy {
    fn ensure(&mut self, n: usize) {
        for z in 0..2 {
            if self.count[z].len() <= n {
                self.count[z].resize(n + 1, 0);
                self.area[z].resize(n + 1, 0.0);
                self.since[z].resize(n + 1, 0.0);
            }
        }
    }

    fn settle(&mut self, z: usize, n: usize, t: f64) {
        let start = self.since[z][n].max(self.burn_in);
        if t > start {
            self.area[z][n] += self.count[z][n] as f64 * (t - start);
        }
        self.since[z][n] = t;
    }

    fn shift(&mut self, from: (usize, usize), to: (usize, usize), t: f64) {
        self.ensure(to.1);
        self.settle(from.0, from.1, t);
        self.settle(to.0, to.1, t);
        self.count[from.0][from.1] -= 1;
        self.count[to.0][to.1] += 1;
    }
}

struct World<'a> {
    cfg: &'a SimConfig,
    loc: Vec<u32>,
    level: Vec<u8>,
    count: Vec<u32>,
    sets: LevelSets,
    occ: Occupancy,
}

impl World<'_> {
    fn relocate(&mut self, agent: usize, to: u32, t: f64) {
        let from = self.loc[agent];
        if from == to {
            return;
        }
        let (zf, nf) = (self.level[from as usize] as usize, self.count[from as usize] as usize);
        self.occ.shift((zf, nf), (zf, nf - 1), t);
        self.count[from as usize] -= 1;
        let (zt, nt) = (self.level[to as usize] as usize, self.count[to as usize] as usize);
        self.occ.shift((zt, nt), (zt, nt + 1), t);
        self.count[to as usize] += 1;
        self.loc[agent] = to;
    }

    fn flip(&mut self, k: u32, t: f64) {
        let z = self.level[k as usize] as usize;
        let n = self.count[k as usize] as usize;
        self.occ.shift((z, n), (1 - z, n), t);
        self.sets.remove(z, k);
        self.sets.insert(1 - z, k);
        self.level[k as usize] = (1 - z) as u8;
    }

    fn snapshot(&self, time: f64) -> Snapshot {
        let k = self.cfg.k as f64;
        Snapshot {
            time,
            high_fraction: self.sets.members[1].len() as f64 / k,
            empty_fraction: self.count.iter().filter(|c| **c == 0).count() as f64 / k,
            max_occupancy: self.count.iter().copied().max().unwrap_or(0) as usize,
        }
    }
}

/// Runs one replica. Identical configs give bit-identical results.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let params = &cfg.params;
    let k = cfg.k;
    let agents = cfg.agents();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let high = params.high_fraction();
    let level: Vec<u8> = (0..k).map(|_| u8::from(rng.random::<f64>() < high)).collect();
    let loc: Vec<u32> = (0..agents).map(|_| rng.random_range(0..k) as u32).collect();
    let mut count = vec![0u32; k];
    for &l in &loc {
        count[l as usize] += 1;
    }
    let mut sets = LevelSets {
        members: [Vec::with_capacity(k), Vec::with_capacity(k)],
        slot: vec![0; k],
    };
    let max_n = count.iter().copied().max().unwrap_or(0) as usize;
    let mut occ = Occupancy {
        count: [vec![0; max_n + 1], vec![0; max_n + 1]],
        area: [vec![0.0; max_n + 1], vec![0.0; max_n + 1]],
        since: [vec![0.0; max_n + 1], vec![0.0; max_n + 1]],
        burn_in: cfg.burn_in,
    };
    for j in 0..k {
        let z = level[j] as usize;
        sets.insert(z, j as u32);
        occ.count[z][count[j] as usize] += 1;
    }
    let mut world = World {
        cfg,
        loc,
        level,
        count,
        sets,
        occ,
    };

    let lambda = params.lambda;
    let agent_rate = agents as f64 * lambda;
    let mut events = EventCounts::default();
    let mut reward = 0.0;
    let mut epochs = 0u64;
    let mut snapshots = Vec::new();
    let mut next_snapshot = 0.0;
    let mut t = 0.0;

    loop {
        let flip_rate = [
            world.sets.members[0].len() as f64 * params.mu01,
            world.sets.members[1].len() as f64 * params.mu10,
        ];
        let total = agent_rate + flip_rate[0] + flip_rate[1];
        let e: f64 = rng.sample(Exp1);
        let t_next = t + e / total;
        while next_snapshot <= cfg.horizon && next_snapshot < t_next {
            snapshots.push(world.snapshot(next_snapshot));
            next_snapshot += cfg.snapshot_interval;
        }
        if t_next > cfg.horizon {
            break;
        }
        t = t_next;

        let u = rng.random::<f64>() * total;
        if u < agent_rate {
            events.decisions += 1;
            let agent = rng.random_range(0..agents);
            let here = world.loc[agent] as usize;
            let z = Resource::from_index(world.level[here] as usize).unwrap();
            let n = world.count[here] as usize;
            if t >= cfg.burn_in {
                reward += z.level() * params.reward.f(n);
                epochs += 1;
            }
            if rng.random::<f64>() < 1.0 - params.gamma {
                events.departures += 1;
                let to = rng.random_range(0..k) as u32;
                world.relocate(agent, to, t);
            } else if rng.random::<f64>() < cfg.policy.switch_probability(z, n) {
                events.switches += 1;
                let to = if cfg.allow_self_switch {
                    Some(rng.random_range(0..k))
                } else if k > 1 {
                    // uniform over the other k − 1 locations
                    let r = rng.random_range(0..k - 1);
                    Some(if r >= here { r + 1 } else { r })
                } else {
                    None
                };
                if let Some(to) = to {
                    world.relocate(agent, to as u32, t);
                }
            }
        } else {
            events.flips += 1;
            let z = usize::from(u - agent_rate >= flip_rate[0]);
            let members = &world.sets.members[z];
            let j = members[rng.random_range(0..members.len())];
            world.flip(j, t);
        }
    }

    let horizon = cfg.horizon;
    let occ = &mut world.occ;
    let top = occ.count[0].len();
    for z in 0..2 {
        for n in 0..top {
            occ.settle(z, n, horizon);
        }
    }
    let weights: Vec<[f64; 2]> = (0..top).map(|n| [occ.area[0][n], occ.area[1][n]]).collect();
    let empirical = Distribution::from_weights(0, weights)?;
    let measured = horizon - cfg.burn_in;
    Ok(SimResult {
        k,
        agents,
        empirical,
        mean_reward_per_epoch: if epochs > 0 { reward / epochs as f64 } else { 0.0 },
        total_welfare_rate: reward / measured / k as f64,
        events,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::mean_occupancy;
    use crate::model::{RewardFn, RewardTable};

    fn config(k: usize, policy: ThresholdPolicy, reward: RewardFn) -> SimConfig {
        SimConfig {
            params: ModelParams::new(1.0, 0.95, 20.0, 0.5, 0.5, reward).unwrap(),
            policy,
            k,
            horizon: 400.0,
            burn_in: 100.0,
            seed: 7,
            snapshot_interval: 50.0,
            allow_self_switch: false,
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        let mut c = config(10, ThresholdPolicy::always_switch(), RewardFn::InverseN);
        c.k = 0;
        assert!(simulate(&c).is_err());
        let mut c = config(10, ThresholdPolicy::always_switch(), RewardFn::InverseN);
        c.params.beta = 0.01;
        assert!(simulate(&c).is_err());
        let mut c = config(10, ThresholdPolicy::always_switch(), RewardFn::InverseN);
        c.burn_in = c.horizon;
        assert!(simulate(&c).is_err());
    }

    #[test]
    fn agent_count_is_conserved() {
        let c = config(25, ThresholdPolicy::new(2.0, 9.0).unwrap(), RewardFn::InverseN);
        let r = simulate(&c).unwrap();
        assert!((r.empirical.total() - 1.0).abs() < 1e-12);
        // time-averaged occupancy is exactly N/K when no agent is lost
        assert!((mean_occupancy(&r.empirical) - 20.0).abs() < 1e-9);
        assert_eq!(r.snapshots.len(), 9);
    }

    #[test]
    fn replicas_are_reproducible() {
        let c = config(20, ThresholdPolicy::new(1.5, 6.0).unwrap(), RewardFn::InverseSqrtN);
        assert_eq!(simulate(&c).unwrap(), simulate(&c).unwrap());
        let mut other = c.clone();
        other.seed += 1;
        assert_ne!(simulate(&c).unwrap(), simulate(&other).unwrap());
    }

    #[test]
    fn zero_reward_zero_welfare() {
        let c = config(
            10,
            ThresholdPolicy::new(3.0, 3.0).unwrap(),
            RewardFn::Table(RewardTable::new(vec![]).unwrap()),
        );
        assert_eq!(welfare(&simulate(&c).unwrap()), 0.0);
    }

    #[test]
    fn doubling_rewards_doubles_welfare() {
        let base: Vec<f64> = (1..=300).map(|n| 1.0 / n as f64).collect();
        let twice: Vec<f64> = base.iter().map(|v| 2.0 * v).collect();
        let a = simulate(&config(
            15,
            ThresholdPolicy::new(2.0, 5.0).unwrap(),
            RewardFn::Table(RewardTable::new(base).unwrap()),
        ))
        .unwrap();
        let b = simulate(&config(
            15,
            ThresholdPolicy::new(2.0, 5.0).unwrap(),
            RewardFn::Table(RewardTable::new(twice).unwrap()),
        ))
        .unwrap();
        assert!(welfare(&a) > 0.0);
        assert!((welfare(&b) - 2.0 * welfare(&a)).abs() <= 1e-12 * welfare(&b));
    }

    #[test]
    fn single_agent_epoch_count() {
        let c = SimConfig {
            params: ModelParams::new(1.0, 0.5, 1.0, 1.0, 1.0, RewardFn::InverseN).unwrap(),
            policy: ThresholdPolicy::always_switch(),
            k: 1,
            horizon: 20_000.0,
            burn_in: 0.0,
            seed: 3,
            snapshot_interval: 1000.0,
            allow_self_switch: false,
        };
        let r = simulate(&c).unwrap();
        // Poisson(T): standard deviation sqrt(T) ≈ 141
        assert!((r.events.decisions as f64 - 20_000.0).abs() < 5.0 * 141.5);
    }
}
