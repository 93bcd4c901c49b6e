//! The tagged agent's optimal stopping problem.
//!
//! Between two of her own decision epochs the tagged agent watches the focal
//! chain `Q`. At an epoch in state `(z, n)` she collects `z f(n)`, survives
//! with probability γ, and then either stops (switches) for the lump payoff
//! `C` or continues with value `V̂(z, n)`:
//!
//! ```text
//! V(z,n)  = z f(n) + γ max{V̂(z,n), C}
//! V̂(z,n) = E[ V(state at the next own epoch) | (z,n) ]
//! ```
//!
//! Value iteration starts from `V̂ ≡ 0` and alternates the two lines over the
//! whole state space. The expectation in the second line is a linear solve
//! against the non-decision part of `Q`; its block-tridiagonal factorization
//! depends only on `(policy, κ)` and is shared by every `C`.

use crate::chain::{build_generator_focal, Generator, Truncation};
use crate::error::{invalid, Error, Result};
use crate::model::{ModelParams, Resource, ThresholdPolicy};

pub const DEFAULT_MAX_SWEEPS: usize = 1_000_000;

/// Next-event probabilities of the focal chain seen from `(z, n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventProbs {
    /// The tagged agent's own decision epoch.
    pub p_dec: f64,
    /// Another agent leaves the system.
    pub p_exit: f64,
    /// Another agent survives its epoch (and then stays or switches).
    pub p_sur: f64,
    /// The resource flips.
    pub p_res: f64,
    /// A new agent arrives.
    pub p_arr: f64,
}

impl EventProbs {
    pub fn total(&self) -> f64 {
        self.p_dec + self.p_exit + self.p_sur + self.p_res + self.p_arr
    }
}

pub fn event_probs(params: &ModelParams, kappa: f64, z: Resource, n: usize) -> Result<EventProbs> {
    if n == 0 {
        return Err(Error::EmptyLocation);
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(invalid("kappa", format!("must be finite and > 0, got {kappa}")));
    }
    let lambda = params.lambda;
    let mu = params.flip_rate(z);
    let others = (n - 1) as f64;
    let denom = n as f64 * lambda + mu + kappa;
    Ok(EventProbs {
        p_dec: lambda / denom,
        p_exit: others * lambda * (1.0 - params.gamma) / denom,
        p_sur: others * lambda * params.gamma / denom,
        p_res: mu / denom,
        p_arr: kappa / denom,
    })
}

/// `V` and `V̂` on `{0,1} × {1..=nmax}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    v: Vec<[f64; 2]>,
    vhat: Vec<[f64; 2]>,
    sweeps: usize,
    residual: f64,
}

impl ValueFunction {
    pub fn nmax(&self) -> usize {
        self.vhat.len()
    }

    pub fn v(&self, z: Resource, n: usize) -> f64 {
        self.v[n - 1][z.index()]
    }

    pub fn vhat(&self, z: Resource, n: usize) -> f64 {
        self.vhat[n - 1][z.index()]
    }

    /// Number of value-iteration sweeps performed.
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Sup-norm change of `V̂` in the last sweep.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `V̂` by level, `[n - 1][z]`.
    pub fn vhat_levels(&self) -> &[[f64; 2]] {
        &self.vhat
    }

    pub fn max_vhat(&self) -> f64 {
        self.vhat.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Assembles a value function from `V̂`, deriving `V` from the Bellman
    /// equation at payoff `c`.
    pub fn from_vhat(params: &ModelParams, c: f64, vhat: Vec<[f64; 2]>) -> ValueFunction {
        let v = decision_values(params, c, &vhat);
        ValueFunction {
            v,
            vhat,
            sweeps: 0,
            residual: f64::NAN,
        }
    }
}

fn decision_values(params: &ModelParams, c: f64, vhat: &[[f64; 2]]) -> Vec<[f64; 2]> {
    vhat.iter()
        .enumerate()
        .map(|(i, h)| {
            let f = params.reward.f(i + 1);
            [params.gamma * h[0].max(c), f + params.gamma * h[1].max(c)]
        })
        .collect()
}

type Mat2 = [[f64; 2]; 2];

/// Factorized stopping problem for a fixed `(policy, κ)`.
#[derive(Debug, Clone)]
pub struct StoppingProblem {
    lambda: f64,
    gamma: f64,
    /// `f(n)` at `z = 1`, indexed by `n - 1`.
    reward: Vec<f64>,
    /// Block Thomas factors: `W_i⁻¹`, `G_i = W_i⁻¹ diag(up_i)`, `down_i`.
    w_inv: Vec<Mat2>,
    g: Vec<Mat2>,
    down: Vec<[f64; 2]>,
}

impl StoppingProblem {
    pub fn new(params: &ModelParams, policy: &ThresholdPolicy, kappa: f64, trunc: Truncation) -> Result<Self> {
        let gen = build_generator_focal(params, policy, kappa, trunc)?;
        Ok(Self::from_generator(params, &gen))
    }

    /// Factorizes `(λ + exit rate) V̂ − (off-diagonal rates) V̂ = λ V` over
    /// the focal chain. Self-transitions (an agent surviving and staying)
    /// cancel on both sides and do not appear.
    pub fn from_generator(params: &ModelParams, gen: &Generator) -> Self {
        let levels = gen.levels();
        let lambda = params.lambda;
        let flip = [gen.flip_rate(Resource::Low), gen.flip_rate(Resource::High)];
        let mut w_inv = Vec::with_capacity(levels);
        let mut g = Vec::with_capacity(levels);
        let mut down = Vec::with_capacity(levels);
        let mut prev_g: Mat2 = [[0.0; 2]; 2];
        for i in 0..levels {
            let n = gen.first_n() + i;
            let up = [gen.birth_rate(Resource::Low, n), gen.birth_rate(Resource::High, n)];
            let dn = [gen.death_rate(Resource::Low, n), gen.death_rate(Resource::High, n)];
            let mut w: Mat2 = [
                [lambda + dn[0] + flip[0] + up[0], -flip[0]],
                [-flip[1], lambda + dn[1] + flip[1] + up[1]],
            ];
            if i > 0 {
                // W_i = B_i − diag(down_i) G_{i−1}
                for a in 0..2 {
                    for b in 0..2 {
                        w[a][b] -= dn[a] * prev_g[a][b];
                    }
                }
            }
            let wi = inverse(&w);
            let gi = [
                [wi[0][0] * up[0], wi[0][1] * up[1]],
                [wi[1][0] * up[0], wi[1][1] * up[1]],
            ];
            w_inv.push(wi);
            g.push(gi);
            down.push(dn);
            prev_g = gi;
        }
        StoppingProblem {
            lambda,
            gamma: params.gamma,
            reward: (1..=levels).map(|n| params.reward.f(n)).collect(),
            w_inv,
            g,
            down,
        }
    }

    pub fn nmax(&self) -> usize {
        self.reward.len()
    }

    /// `E[X(state at the next own epoch)]` for a per-state quantity `X`.
    pub fn expect_at_next_epoch(&self, x: &[[f64; 2]], out: &mut Vec<[f64; 2]>) {
        let levels = self.reward.len();
        out.clear();
        out.resize(levels, [0.0; 2]);
        let mut prev = [0.0; 2];
        for i in 0..levels {
            let d = self.down[i];
            let r = [
                self.lambda * x[i][0] + d[0] * prev[0],
                self.lambda * x[i][1] + d[1] * prev[1],
            ];
            let w = &self.w_inv[i];
            let y = [w[0][0] * r[0] + w[0][1] * r[1], w[1][0] * r[0] + w[1][1] * r[1]];
            out[i] = y;
            prev = y;
        }
        for i in (0..levels.saturating_sub(1)).rev() {
            let next = out[i + 1];
            let g = &self.g[i];
            out[i][0] += g[0][0] * next[0] + g[0][1] * next[1];
            out[i][1] += g[1][0] * next[0] + g[1][1] * next[1];
        }
    }

    /// One Jacobi sweep: `V^(m)` from `V̂^(m)`, then `V̂^(m+1)`.
    pub fn bellman_step(&self, c: f64, vhat: &[[f64; 2]], v: &mut Vec<[f64; 2]>, next: &mut Vec<[f64; 2]>) {
        v.clear();
        v.extend(
            vhat.iter()
                .zip(&self.reward)
                .map(|(h, f)| [self.gamma * h[0].max(c), f + self.gamma * h[1].max(c)]),
        );
        self.expect_at_next_epoch(v, next);
    }

    /// Value iteration from `V̂ ≡ 0` until the sup-norm change is `≤ tol`.
    pub fn solve(&self, c: f64, tol: f64, max_sweeps: usize) -> Result<ValueFunction> {
        self.solve_from(c, vec![[0.0; 2]; self.reward.len()], tol, max_sweeps)
    }

    /// Value iteration started from `start`, typically the solution at a
    /// nearby payoff.
    pub fn solve_from(&self, c: f64, start: Vec<[f64; 2]>, tol: f64, max_sweeps: usize) -> Result<ValueFunction> {
        if !(tol > 0.0) {
            return Err(invalid("tol", format!("must be > 0, got {tol}")));
        }
        let levels = self.reward.len();
        if start.len() != levels {
            return Err(invalid(
                "start",
                format!("expected {levels} levels, got {}", start.len()),
            ));
        }
        let mut vhat = start;
        let mut next = Vec::with_capacity(levels);
        let mut v = Vec::with_capacity(levels);
        let mut residual = f64::INFINITY;
        for sweep in 1..=max_sweeps {
            self.bellman_step(c, &vhat, &mut v, &mut next);
            residual = vhat
                .iter()
                .zip(&next)
                .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
                .fold(0.0, f64::max);
            std::mem::swap(&mut vhat, &mut next);
            if residual <= tol {
                let v = vhat
                    .iter()
                    .zip(&self.reward)
                    .map(|(h, f)| [self.gamma * h[0].max(c), f + self.gamma * h[1].max(c)])
                    .collect();
                return Ok(ValueFunction {
                    v,
                    vhat,
                    sweeps: sweep,
                    residual,
                });
            }
        }
        Err(Error::NotConverged {
            iterations: max_sweeps,
            residual,
        })
    }
}

fn inverse(m: &Mat2) -> Mat2 {
    // Strictly diagonally dominant M-matrix: det > 0.
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

/// Solves `OS(n0, n1, κ, C)` by value iteration.
pub fn value_iterate(
    params: &ModelParams,
    policy: &ThresholdPolicy,
    kappa: f64,
    c: f64,
    trunc: Truncation,
    tol: f64,
) -> Result<ValueFunction> {
    if !(c.is_finite() && c > 0.0) {
        return Err(invalid(
            "c",
            format!("switching payoff must be finite and > 0, got {c}"),
        ));
    }
    StoppingProblem::new(params, policy, kappa, trunc)?.solve(c, tol, DEFAULT_MAX_SWEEPS)
}

/// Sup-norm residual of the one-step Bellman equation written with the
/// next-event probabilities, with arrivals at `nmax` reflected.
pub fn bellman_residual(
    params: &ModelParams,
    policy: &ThresholdPolicy,
    kappa: f64,
    c: f64,
    vf: &ValueFunction,
) -> Result<f64> {
    let nmax = vf.nmax();
    let mut worst: f64 = 0.0;
    for z in Resource::ALL {
        for n in 1..=nmax {
            let p = event_probs(params, kappa, z, n)?;
            let v = z.level() * params.reward.f(n) + params.gamma * vf.vhat(z, n).max(c);
            worst = worst.max((v - vf.v(z, n)).abs());
            let s = policy.switch_probability(z, n);
            let below = if n > 1 { vf.vhat(z, n - 1) } else { 0.0 };
            let above = vf.vhat(z, (n + 1).min(nmax));
            let rhs = p.p_dec * v
                + p.p_exit * below
                + p.p_sur * s * below
                + p.p_sur * (1.0 - s) * vf.vhat(z, n)
                + p.p_res * vf.vhat(z.flip(), n)
                + p.p_arr * above;
            worst = worst.max((rhs - vf.vhat(z, n)).abs());
        }
    }
    Ok(worst)
}

/// Product of per-level intervals of optimal thresholds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ThresholdBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl ThresholdBox {
    pub fn interval(&self, z: Resource) -> (f64, f64) {
        (self.lo[z.index()], self.hi[z.index()])
    }

    pub fn contains(&self, p: &ThresholdPolicy) -> bool {
        threshold_distance(p, self) == 0.0
    }
}

pub fn default_indifference_tol(params: &ModelParams) -> f64 {
    1e-7 * params.reward.f(1) / (1.0 - params.gamma)
}

const MONOTONE_SLACK: f64 = 1e-9;

/// Box of optimal thresholds: per level, `[max{n: V̂ > C}, min{n: V̂ < C}]`
/// with comparisons taken outside an indifference band `tol_eq`.
pub fn optimal_thresholds(vf: &ValueFunction, c: f64, tol_eq: f64) -> Result<ThresholdBox> {
    let nmax = vf.nmax();
    let mut lo = [0.0; 2];
    let mut hi = [nmax as f64; 2];
    for z in Resource::ALL {
        for n in 1..nmax {
            let increase = vf.vhat(z, n + 1) - vf.vhat(z, n);
            if increase > MONOTONE_SLACK {
                return Err(Error::NonMonotone {
                    z: z.index(),
                    n,
                    increase,
                });
            }
        }
        if let Some(n) = (1..=nmax).rev().find(|&n| vf.vhat(z, n) > c + tol_eq) {
            lo[z.index()] = n as f64;
        }
        if let Some(n) = (1..=nmax).find(|&n| vf.vhat(z, n) < c - tol_eq) {
            hi[z.index()] = n as f64;
        }
    }
    Ok(ThresholdBox { lo, hi })
}

/// Euclidean distance from a policy to a threshold box.
pub fn threshold_distance(p: &ThresholdPolicy, b: &ThresholdBox) -> f64 {
    Resource::ALL
        .into_iter()
        .map(|z| {
            let (lo, hi) = b.interval(z);
            let t = p.threshold(z);
            let gap = if t < lo {
                lo - t
            } else if t > hi {
                t - hi
            } else {
                0.0
            };
            gap * gap
        })
        .sum::<f64>()
        .sqrt()
}
