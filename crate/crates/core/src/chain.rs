//! Per-location continuous-time Markov chain.
//!
//! A location's state is `(z, n)`: resource level and number of agents.
//! Two generators are built from a threshold policy and an arrival rate κ:
//!
//! * the *focal* generator `Q`, seen by one tagged agent while everyone else
//!   follows the policy, on `n ∈ {1..=nmax}`;
//! * the *population* generator `Q̄`, where all agents follow the policy, on
//!   `n ∈ {0..nmax}`.
//!
//! Both are quasi-birth-death chains in `n` with two phases `z`. Births are
//! suppressed at the top level, so the truncated chain is reflecting.

use crate::error::{invalid, Error, Result};
use crate::model::{ModelParams, Resource, ThresholdPolicy};

pub const DEFAULT_NMAX: usize = 200;

/// Upper bound on the number of agents per location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Truncation {
    pub nmax: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { nmax: DEFAULT_NMAX }
    }
}

impl Truncation {
    pub fn new(nmax: usize) -> Result<Self> {
        if nmax < 2 {
            return Err(Error::TruncationTooSmall { nmax, required: 2 });
        }
        Ok(Truncation { nmax })
    }

    /// Checks that neither threshold sits on the reflecting boundary.
    ///
    /// Thresholds above `nmax` are accepted and mean "never switch"; a
    /// threshold in `[nmax - 1, nmax]` would put the switching decision at
    /// the truncation edge and is rejected.
    pub fn check_policy(&self, policy: &ThresholdPolicy) -> Result<()> {
        if self.nmax < 2 {
            return Err(Error::TruncationTooSmall {
                nmax: self.nmax,
                required: 2,
            });
        }
        let edge = self.nmax as f64;
        for z in Resource::ALL {
            let t = policy.threshold(z);
            if t >= edge - 1.0 && t <= edge {
                return Err(Error::TruncationTooSmall {
                    nmax: self.nmax,
                    required: t.ceil() as usize + 2,
                });
            }
        }
        Ok(())
    }

    pub fn doubled(&self) -> Truncation {
        Truncation { nmax: 2 * self.nmax }
    }
}

/// Which agents the location dynamics are built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perspective {
    /// All agents but one tagged agent follow the policy (`Q`).
    Focal,
    /// Every agent follows the policy (`Q̄`).
    Population,
}

/// Sparse rate matrix of a location chain.
///
/// Level `i` holds occupancy `n = first + i`. Only three kinds of
/// transitions exist: resource flips `(z,n) → (1−z,n)`, arrivals
/// `(z,n) → (z,n+1)` and departures `(z,n) → (z,n−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    perspective: Perspective,
    first: usize,
    flip: [f64; 2],
    up: Vec<[f64; 2]>,
    down: Vec<[f64; 2]>,
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(invalid(
            "kappa",
            format!("arrival rate must be finite and > 0, got {kappa}"),
        ));
    }
    Ok(())
}

fn build(
    perspective: Perspective,
    params: &ModelParams,
    policy: &ThresholdPolicy,
    kappa: f64,
    trunc: Truncation,
) -> Result<Generator> {
    check_kappa(kappa)?;
    trunc.check_policy(policy)?;
    let (first, last) = match perspective {
        Perspective::Focal => (1, trunc.nmax),
        Perspective::Population => (0, trunc.nmax - 1),
    };
    let lambda = params.lambda;
    let gamma = params.gamma;
    let mut up = Vec::with_capacity(last - first + 1);
    let mut down = Vec::with_capacity(last - first + 1);
    for n in first..=last {
        let movers = match perspective {
            Perspective::Focal => n - 1,
            Perspective::Population => n,
        } as f64;
        let mut d = [0.0; 2];
        for z in Resource::ALL {
            if movers > 0.0 {
                let s = policy.switch_probability(z, n);
                d[z.index()] = lambda * movers * (1.0 - gamma + gamma * s);
            }
        }
        let b = if n == last { 0.0 } else { kappa };
        up.push([b, b]);
        down.push(d);
    }
    Ok(Generator {
        perspective,
        first,
        flip: [params.mu01, params.mu10],
        up,
        down,
    })
}

/// `Q`: location dynamics seen by a tagged agent, on `{0,1} × {1..=nmax}`.
pub fn build_generator_focal(
    params: &ModelParams,
    policy: &ThresholdPolicy,
    kappa: f64,
    trunc: Truncation,
) -> Result<Generator> {
    build(Perspective::Focal, params, policy, kappa, trunc)
}

/// `Q̄`: location dynamics when every agent follows the policy, on
/// `{0,1} × {0..nmax}`.
pub fn build_generator_all(
    params: &ModelParams,
    policy: &ThresholdPolicy,
    kappa: f64,
    trunc: Truncation,
) -> Result<Generator> {
    build(Perspective::Population, params, policy, kappa, trunc)
}

impl Generator {
    pub fn perspective(&self) -> Perspective {
        self.perspective
    }

    pub fn first_n(&self) -> usize {
        self.first
    }

    pub fn last_n(&self) -> usize {
        self.first + self.up.len() - 1
    }

    pub fn levels(&self) -> usize {
        self.up.len()
    }

    pub fn num_states(&self) -> usize {
        2 * self.levels()
    }

    fn level(&self, n: usize) -> Option<usize> {
        (n >= self.first && n <= self.last_n()).then(|| n - self.first)
    }

    pub fn flip_rate(&self, z: Resource) -> f64 {
        self.flip[z.index()]
    }

    pub fn birth_rate(&self, z: Resource, n: usize) -> f64 {
        self.level(n).map_or(0.0, |i| self.up[i][z.index()])
    }

    pub fn death_rate(&self, z: Resource, n: usize) -> f64 {
        self.level(n).map_or(0.0, |i| self.down[i][z.index()])
    }

    /// Total rate of leaving `(z, n)`.
    pub fn exit_rate(&self, z: Resource, n: usize) -> f64 {
        self.flip_rate(z) + self.birth_rate(z, n) + self.death_rate(z, n)
    }

    /// Entry `Q((z,n) → (z',n'))`; the diagonal is minus the exit rate.
    pub fn rate(&self, from: (Resource, usize), to: (Resource, usize)) -> f64 {
        let ((z, n), (z2, n2)) = (from, to);
        if self.level(n).is_none() || self.level(n2).is_none() {
            return 0.0;
        }
        if (z, n) == (z2, n2) {
            -self.exit_rate(z, n)
        } else if n == n2 && z2 == z.flip() {
            self.flip_rate(z)
        } else if z == z2 && n2 == n + 1 {
            self.birth_rate(z, n)
        } else if z == z2 && n2 + 1 == n {
            self.death_rate(z, n)
        } else {
            0.0
        }
    }

    /// Row-vector product `xᵀ Q`, with `x` laid out like a [`Distribution`].
    pub fn left_apply(&self, x: &Distribution) -> Vec<[f64; 2]> {
        let levels = self.levels();
        let mut out = vec![[0.0; 2]; levels];
        for i in 0..levels {
            for z in Resource::ALL {
                let zi = z.index();
                let mass = x.mass[i][zi];
                if mass == 0.0 {
                    continue;
                }
                let (b, d, f) = (self.up[i][zi], self.down[i][zi], self.flip[zi]);
                out[i][zi] -= mass * (b + d + f);
                out[i][1 - zi] += mass * f;
                if b > 0.0 {
                    out[i + 1][zi] += mass * b;
                }
                if d > 0.0 {
                    out[i - 1][zi] += mass * d;
                }
            }
        }
        out
    }

    /// Largest `|(πᵀQ)(z,n)|`.
    pub fn balance_residual(&self, pi: &Distribution) -> f64 {
        self.left_apply(pi)
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Probability mass over `{0,1} × {first..}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    first: usize,
    mass: Vec<[f64; 2]>,
}

impl Distribution {
    /// Builds a distribution from raw weights, normalizing them.
    pub fn from_weights(first: usize, weights: Vec<[f64; 2]>) -> Result<Self> {
        if weights.iter().flatten().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("distribution", "weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().flatten().sum();
        if !(total > 0.0) {
            return Err(invalid("distribution", "weights sum to zero"));
        }
        let mass = weights.into_iter().map(|[a, b]| [a / total, b / total]).collect();
        Ok(Distribution { first, mass })
    }

    pub fn first_n(&self) -> usize {
        self.first
    }

    pub fn last_n(&self) -> usize {
        self.first + self.mass.len() - 1
    }

    pub fn get(&self, z: Resource, n: usize) -> f64 {
        if n < self.first {
            return 0.0;
        }
        self.mass.get(n - self.first).map_or(0.0, |m| m[z.index()])
    }

    /// `(z, n, π(z,n))` in order of `n`, then `z`.
    pub fn iter(&self) -> impl Iterator<Item = (Resource, usize, f64)> + '_ {
        self.mass.iter().enumerate().flat_map(move |(i, m)| {
            Resource::ALL
                .into_iter()
                .map(move |z| (z, self.first + i, m[z.index()]))
        })
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().flatten().sum()
    }

    /// Mass on `z = 1`.
    pub fn high_marginal(&self) -> f64 {
        self.mass.iter().map(|m| m[1]).sum()
    }

    /// Marginal law of the occupancy, indexed from `first_n()`.
    pub fn occupancy_marginal(&self) -> Vec<f64> {
        self.mass.iter().map(|m| m[0] + m[1]).collect()
    }

    /// Total-variation distance, treating missing states as zero mass.
    pub fn total_variation(&self, other: &Distribution) -> f64 {
        let lo = self.first.min(other.first);
        let hi = self.last_n().max(other.last_n());
        let mut acc = 0.0;
        for n in lo..=hi {
            for z in Resource::ALL {
                acc += (self.get(z, n) - other.get(z, n)).abs();
            }
        }
        0.5 * acc
    }
}

/// Stationary distribution of an irreducible generator.
///
/// Direct block elimination of `πᵀQ = 0` with the normalization `Σπ = 1`
/// standing in for the dropped balance equation: the level-`n` mass is
/// expressed through the level below as `π_n = π_{n−1} R_n`, with `R_n`
/// computed from the top level down, and the bottom level is the left null
/// vector of its censored 2×2 generator. Diagonals of the censored blocks are
/// recovered from their row sums rather than by subtraction, so every
/// intermediate quantity is a sum of nonnegative terms.
pub fn stationary(gen: &Generator) -> Result<Distribution> {
    let levels = gen.levels();
    let flip = gen.flip;

    // Censored level-i generator, kept as its off-diagonal rates `off` and its
    // exit rate `down_i` to level i−1; the diagonal is −(off + down_i).
    // rates[i] = R_i for i >= 1.
    let mut rates: Vec<Mat2> = vec![[[0.0; 2]; 2]; levels];
    let mut off = flip;
    for i in (1..levels).rev() {
        let down = gen.down[i];
        // (−M_i)⁻¹ with the determinant expanded so that no terms cancel.
        let det = off[0] * down[1] + down[0] * off[1] + down[0] * down[1];
        if !(det > 0.0 && det.is_finite()) {
            return Err(Error::SingularGenerator(format!(
                "level {} cannot be left downward",
                gen.first + i
            )));
        }
        let inv = [
            [(off[1] + down[1]) / det, off[0] / det],
            [off[1] / det, (off[0] + down[0]) / det],
        ];
        let up = gen.up[i - 1];
        // R_i = diag(up_{i−1}) (−M_i)⁻¹
        let r = [
            [up[0] * inv[0][0], up[0] * inv[0][1]],
            [up[1] * inv[1][0], up[1] * inv[1][1]],
        ];
        rates[i] = r;
        // off-diagonal of M_{i−1} = A_{i−1} + R_i diag(down_i)
        off = [flip[0] + r[0][1] * down[1], flip[1] + r[1][0] * down[0]];
    }

    // Bottom level: x (−M_0) = 0 with no downward exit.
    let base = [off[1], off[0]];
    if !(base[0] + base[1] > 0.0 && base.iter().all(|v| v.is_finite())) {
        return Err(Error::SingularGenerator(
            "no positive null vector at the bottom level".into(),
        ));
    }

    let mut mass = Vec::with_capacity(levels);
    mass.push(base);
    for r in rates.iter().skip(1) {
        let prev = *mass.last().unwrap();
        let next = [
            prev[0] * r[0][0] + prev[1] * r[1][0],
            prev[0] * r[0][1] + prev[1] * r[1][1],
        ];
        mass.push(next);
        let peak = next[0].max(next[1]);
        if peak > 1e200 {
            for m in mass.iter_mut() {
                m[0] *= 1e-200;
                m[1] *= 1e-200;
            }
        }
    }
    let total: f64 = mass.iter().flatten().sum();
    if !(total.is_finite() && total > 0.0) || mass.iter().flatten().any(|v| *v < 0.0) {
        return Err(Error::SingularGenerator("non-normalizable solution".into()));
    }
    for m in mass.iter_mut() {
        m[0] /= total;
        m[1] /= total;
    }
    Ok(Distribution { first: gen.first, mass })
}

type Mat2 = [[f64; 2]; 2];

/// `Σ n π(z, n)`.
pub fn mean_occupancy(pi: &Distribution) -> f64 {
    pi.iter().map(|(_, n, p)| n as f64 * p).sum()
}

/// Arrival rate meeting the density constraint, with its stationary law.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub kappa: f64,
    pub pi: Distribution,
    /// Truncation actually used (doubled once if the first bracket failed).
    pub trunc: Truncation,
    pub bisections: usize,
    /// `Σ π(z, nmax−1)`: mass on the reflecting boundary.
    pub boundary_mass: f64,
}

const MAX_BISECTIONS: usize = 200;

/// Bisects κ over `[βλ(1−γ), βλ]` until the mean occupancy under `Q̄` is
/// within `tol` of β.
///
/// Departure rates lie between `λn(1−γ)` and `λn`, so the mean occupancy lies
/// between `κ/λ` and `κ/(λ(1−γ))` and the bracket endpoints straddle β up to
/// truncation loss. If they do not, the truncation is doubled once.
pub fn calibrate_kappa(
    params: &ModelParams,
    policy: &ThresholdPolicy,
    trunc: Truncation,
    tol: f64,
) -> Result<Calibration> {
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be > 0, got {tol}")));
    }
    match calibrate_in(params, policy, trunc, tol) {
        Err(Error::BracketFailure { .. }) => calibrate_in(params, policy, trunc.doubled(), tol),
        other => other,
    }
}

fn calibrate_in(params: &ModelParams, policy: &ThresholdPolicy, trunc: Truncation, tol: f64) -> Result<Calibration> {
    let beta = params.beta;
    let solve = |kappa: f64| -> Result<(Distribution, f64)> {
        let pi = stationary(&build_generator_all(params, policy, kappa, trunc)?)?;
        let mean = mean_occupancy(&pi);
        Ok((pi, mean))
    };
    let finish = |kappa: f64, pi: Distribution, bisections: usize| {
        let top = trunc.nmax - 1;
        let boundary_mass = pi.get(Resource::Low, top) + pi.get(Resource::High, top);
        Calibration {
            kappa,
            pi,
            trunc,
            bisections,
            boundary_mass,
        }
    };

    let mut lo = beta * params.lambda * (1.0 - params.gamma);
    let mut hi = beta * params.lambda;
    let (pi_lo, mean_lo) = solve(lo)?;
    if (mean_lo - beta).abs() <= tol {
        return Ok(finish(lo, pi_lo, 0));
    }
    let (pi_hi, mean_hi) = solve(hi)?;
    if (mean_hi - beta).abs() <= tol {
        return Ok(finish(hi, pi_hi, 0));
    }
    if !(mean_lo < beta && beta < mean_hi) {
        return Err(Error::BracketFailure {
            lo,
            hi,
            beta,
            mean_lo,
            mean_hi,
        });
    }

    let mut best = (f64::INFINITY, hi, pi_hi);
    for step in 1..=MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let (pi, mean) = solve(mid)?;
        let err = (mean - beta).abs();
        if err <= tol {
            return Ok(finish(mid, pi, step));
        }
        if mean < beta {
            lo = mid;
        } else {
            hi = mid;
        }
        if err < best.0 {
            best = (err, mid, pi);
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    // Bracket collapsed to machine precision; the closest midpoint is as good
    // as the arithmetic allows.
    let (_, kappa, pi) = best;
    Ok(finish(kappa, pi, MAX_BISECTIONS))
}
