//! Equilibrium map and the adaptive grid search for its approximate fixed
//! points.
//!
//! For a threshold policy `(n0, n1)` and switching payoff `C`:
//!
//! 1. calibrate κ so the population chain has mean occupancy β, giving π;
//! 2. solve the stopping problem at `(n0, n1, κ, C)` and extract the box of
//!    optimal thresholds, with `dist` the distance of `(n0, n1)` to it;
//! 3. compute the payoff of relocating `C̃ = Σ π(z,n) V̂(z,n+1)`;
//! 4. score the point by `d = |C − C̃| + dist`.
//!
//! Equilibria are the zeros of `d`. The search scores a coarse grid, then
//! repeatedly re-grids more finely around the best points.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{calibrate_kappa, Distribution, Truncation, DEFAULT_NMAX};
use crate::error::{invalid, Error, Result};
use crate::model::{ModelParams, ThresholdPolicy};
use crate::stopping::{
    default_indifference_tol, optimal_thresholds, threshold_distance, StoppingProblem, ThresholdBox, ValueFunction,
    DEFAULT_MAX_SWEEPS,
};

/// Expected continuation value of an agent relocating to a location drawn
/// from `pi`: `Σ π(z,n) V̂(z, n+1)`.
pub fn c_tilde(pi: &Distribution, vf: &ValueFunction) -> f64 {
    let nmax = vf.nmax();
    pi.iter().map(|(z, n, p)| p * vf.vhat(z, (n + 1).min(nmax))).sum()
}

/// Bounds confining equilibrium switching payoffs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PayoffBounds {
    /// `f(1) / (1 − γ)`.
    pub c_bar: f64,
    /// `λ/(λ+μ10+βλ) · μ01/(λ+μ01+βλ) · exp(−β/(1−γ)) · f(1)`.
    pub c_under: f64,
}

pub fn bounds(params: &ModelParams) -> PayoffBounds {
    let f1 = params.reward.f(1);
    let (l, b, g) = (params.lambda, params.beta, params.gamma);
    let c_bar = f1 / (1.0 - g);
    let c_under =
        l / (l + params.mu10 + b * l) * (params.mu01 / (l + params.mu01 + b * l)) * (-b / (1.0 - g)).exp() * f1;
    PayoffBounds { c_bar, c_under }
}

/// Decreasing envelope `g(n)` used to bound optimal thresholds, for `n ≥ 3`.
///
/// `f` is evaluated at `max(1, ⌊√n / 2⌋)`.
pub fn g_bound(params: &ModelParams, n: u64) -> Result<f64> {
    if n < 3 {
        return Err(invalid("n", format!("g(n) needs n >= 3, got {n}")));
    }
    let x = n as f64;
    let root = x.sqrt();
    let log = x.ln();
    let g = params.gamma;
    let arg = ((root / 2.0).floor() as usize).max(1);
    let head = params.reward.f(arg) + (-root / 8.0).exp() + 2.0 / log.sqrt();
    let tail = g.powi(log.sqrt().floor() as i32) * params.reward.f(1);
    Ok((head + tail) / (1.0 - g))
}

/// `M = min{n : g(n) < (1 − γ) C̲}`, or `None` when no 64-bit `n` qualifies.
pub fn threshold_bound(params: &ModelParams) -> Option<u64> {
    let target = (1.0 - params.gamma) * bounds(params).c_under;
    let below = |n: u64| g_bound(params, n).map(|g| g < target).unwrap_or(false);
    if !below(u64::MAX) {
        return None;
    }
    let (mut lo, mut hi) = (3u64, u64::MAX);
    if below(lo) {
        return Some(lo);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Grid-search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Thresholds range over `[0, nhi]²`.
    pub nhi: f64,
    /// Coarse threshold spacing.
    pub resolution: f64,
    /// Lower edge of the payoff grid; defaults to `c_resolution`. When set,
    /// it also bounds the payoff fixed-point search, which otherwise reaches
    /// down to `c_resolution / 1000`.
    pub c_min: Option<f64>,
    /// Upper edge of the payoff grid; defaults to `C̄`.
    pub c_max: Option<f64>,
    /// Coarse payoff spacing; defaults to `C̄ / 100`.
    pub c_resolution: Option<f64>,
    /// Number of grid levels, the coarse one included.
    pub levels: usize,
    /// Each level divides both spacings by this factor.
    pub refinement_factor: usize,
    /// Points re-gridded around after each level.
    pub top_q: usize,
    /// Tolerance for κ calibration and value iteration.
    pub tol: f64,
    /// Indifference band for optimal thresholds; defaults to `1e-7 C̄`.
    pub tol_eq: Option<f64>,
    pub nmax: usize,
    /// Candidates returned in full, one per distinct behavior and payoff.
    pub keep: usize,
    /// Also score each policy at its payoff fixed point `C̃(C) = C`.
    pub payoff_root: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            nhi: 50.0,
            resolution: 1.0,
            c_min: None,
            c_max: None,
            c_resolution: None,
            levels: 3,
            refinement_factor: 5,
            top_q: 5,
            tol: 1e-6,
            tol_eq: None,
            nmax: DEFAULT_NMAX,
            keep: 20,
            payoff_root: true,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nhi.is_finite() && self.nhi >= 0.0) {
            return Err(invalid("nhi", "must be finite and >= 0"));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(invalid("resolution", "must be > 0"));
        }
        if self.levels == 0 {
            return Err(invalid("levels", "need at least one level"));
        }
        if self.refinement_factor < 1 {
            return Err(invalid("refinement_factor", "must be >= 1"));
        }
        if self.top_q == 0 {
            return Err(invalid("top_q", "must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be > 0"));
        }
        Truncation::new(self.nmax)?;
        for (name, v) in [
            ("c_min", self.c_min),
            ("c_max", self.c_max),
            ("c_resolution", self.c_resolution),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(name, "must be finite and > 0"));
                }
            }
        }
        Ok(())
    }

    fn indifference_tol(&self, params: &ModelParams) -> f64 {
        self.tol_eq
            .unwrap_or_else(|| default_indifference_tol(params))
            .max(f64::MIN_POSITIVE)
    }
}

/// One evaluated point of the equilibrium map.
#[derive(Debug, Clone)]
pub struct EquilibriumCandidate {
    pub policy: ThresholdPolicy,
    pub c: f64,
    pub kappa: f64,
    pub pi: Distribution,
    pub vf: ValueFunction,
    pub thresholds: ThresholdBox,
    pub c_tilde: f64,
    pub dist: f64,
    /// `|C − C̃| + dist`.
    pub d: f64,
    /// Grid level (0 = coarse) on which the point was first scored.
    pub level: usize,
}

/// Scores one `(policy, C)` point.
pub fn evaluate(
    params: &ModelParams,
    policy: &ThresholdPolicy,
    c: f64,
    cfg: &SearchConfig,
) -> Result<EquilibriumCandidate> {
    let trunc = Truncation::new(cfg.nmax)?;
    let cal = calibrate_kappa(params, policy, trunc, cfg.tol)?;
    let problem = StoppingProblem::new(params, policy, cal.kappa, cal.trunc)?;
    let s = score(&problem, &cal.pi, policy, c, cfg.tol, cfg.indifference_tol(params))?;
    Ok(EquilibriumCandidate {
        policy: *policy,
        c,
        kappa: cal.kappa,
        pi: cal.pi,
        vf: s.vf,
        thresholds: s.thresholds,
        c_tilde: s.c_tilde,
        dist: s.dist,
        d: s.d,
        level: 0,
    })
}

struct Score {
    vf: ValueFunction,
    thresholds: ThresholdBox,
    c_tilde: f64,
    dist: f64,
    d: f64,
}

fn score(
    problem: &StoppingProblem,
    pi: &Distribution,
    policy: &ThresholdPolicy,
    c: f64,
    tol: f64,
    tol_eq: f64,
) -> Result<Score> {
    score_from(problem, pi, policy, c, None, tol, tol_eq)
}

fn score_from(
    problem: &StoppingProblem,
    pi: &Distribution,
    policy: &ThresholdPolicy,
    c: f64,
    start: Option<&ValueFunction>,
    tol: f64,
    tol_eq: f64,
) -> Result<Score> {
    if !(c.is_finite() && c > 0.0) {
        return Err(invalid(
            "c",
            format!("switching payoff must be finite and > 0, got {c}"),
        ));
    }
    let vf = match start {
        Some(s) => problem.solve_from(c, s.vhat_levels().to_vec(), tol, DEFAULT_MAX_SWEEPS)?,
        None => problem.solve(c, tol, DEFAULT_MAX_SWEEPS)?,
    };
    let thresholds = optimal_thresholds(&vf, c, tol_eq)?;
    let dist = threshold_distance(policy, &thresholds);
    let ct = c_tilde(pi, &vf);
    Ok(Score {
        vf,
        thresholds,
        c_tilde: ct,
        dist,
        d: (c - ct).abs() + dist,
    })
}

/// A point the sweep could not score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedCell {
    pub n0: f64,
    pub n1: f64,
    pub c: Option<f64>,
    pub reason: String,
}

/// Result of [`search`].
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Best candidates, ascending in `d`.
    pub ranked: Vec<EquilibriumCandidate>,
    /// Best `d` after each level.
    pub level_best: Vec<f64>,
    pub evaluated: usize,
    pub skipped: Vec<SkippedCell>,
    pub bounds: PayoffBounds,
    /// Theoretical threshold bound, diagnostic only.
    pub threshold_bound: Option<u64>,
    /// True when `f ≡ 0`, in which case no positive payoff is self-consistent.
    pub degenerate: bool,
}

impl SearchOutcome {
    pub fn head(&self) -> Option<&EquilibriumCandidate> {
        self.ranked.first()
    }
}

/// Integer lattice coordinates: thresholds in units of `unit_n`, payoffs in
/// units of `unit_c`. The same point gets the same key on every level.
type Key = (u64, u64, u64);

/// A scored point without its value function. Payoff fixed points sit off
/// the lattice; `key` then holds the nearest lattice payoff.
#[derive(Debug, Clone, Copy)]
struct Light {
    key: Key,
    policy: ThresholdPolicy,
    c: f64,
    d: f64,
    level: usize,
}

fn rank(a: &Light, b: &Light) -> std::cmp::Ordering {
    a.d.total_cmp(&b.d)
        .then(a.policy.n0.total_cmp(&b.policy.n0))
        .then(a.policy.n1.total_cmp(&b.policy.n1))
        .then(a.c.total_cmp(&b.c))
}

struct Grid {
    unit_n: f64,
    unit_c: f64,
    max_n: u64,
    min_c: u64,
    max_c: u64,
    /// Lower end of the payoff fixed-point search.
    root_lo: f64,
}

impl Grid {
    fn policy(&self, k0: u64, k1: u64) -> ThresholdPolicy {
        ThresholdPolicy {
            n0: k0 as f64 * self.unit_n,
            n1: k1 as f64 * self.unit_n,
        }
    }

    fn payoff(&self, kc: u64) -> f64 {
        kc as f64 * self.unit_c
    }
}

/// Adaptive grid search for approximate equilibria.
pub fn search(params: &ModelParams, cfg: &SearchConfig) -> Result<SearchOutcome> {
    params.validate()?;
    cfg.validate()?;
    let bnds = bounds(params);
    let degenerate = !(bnds.c_bar > 0.0);
    // With f ≡ 0 the natural payoff range collapses; scan (0, 1] instead.
    let c_scale = if degenerate { 1.0 } else { bnds.c_bar };
    let c_res = cfg.c_resolution.unwrap_or(c_scale / 100.0);
    let c_min = cfg.c_min.unwrap_or(c_res);
    let c_max = cfg.c_max.unwrap_or(c_scale);
    if c_min > c_max {
        return Err(invalid("c_min", format!("{c_min} exceeds c_max {c_max}")));
    }

    let fine = (cfg.refinement_factor as u64).pow(cfg.levels as u32 - 1);
    let grid = Grid {
        unit_n: cfg.resolution / fine as f64,
        unit_c: c_res / fine as f64,
        max_n: (cfg.nhi / (cfg.resolution / fine as f64) + 1e-9).floor() as u64,
        min_c: (c_min / (c_res / fine as f64) - 1e-9).ceil() as u64,
        max_c: (c_max / (c_res / fine as f64) + 1e-9).floor() as u64,
        root_lo: cfg.c_min.unwrap_or(c_res * 1e-3).min(c_min),
    };
    let tol_eq = cfg.indifference_tol(params);

    let mut seen: HashSet<Key> = HashSet::new();
    let mut all: Vec<Light> = Vec::new();
    let mut skipped = Vec::new();
    let mut level_best = Vec::with_capacity(cfg.levels);

    for level in 0..cfg.levels {
        let step = (cfg.refinement_factor as u64).pow((cfg.levels - 1 - level) as u32);
        let points: Vec<Key> = if level == 0 {
            let ns: Vec<u64> = (0..=grid.max_n).step_by(step as usize).collect();
            let first_c = grid.min_c.div_ceil(step) * step;
            let cs: Vec<u64> = (first_c..=grid.max_c).step_by(step as usize).collect();
            let mut pts = Vec::with_capacity(ns.len() * ns.len() * cs.len());
            for &a in &ns {
                for &b in &ns {
                    for &c in &cs {
                        pts.push((a, b, c));
                    }
                }
            }
            pts
        } else {
            let span = cfg.refinement_factor as i64;
            let around = |k: u64, lo: u64, hi: u64| -> Vec<u64> {
                (-span..=span)
                    .filter_map(|j| {
                        let x = k as i64 + j * step as i64;
                        (x >= lo as i64 && x <= hi as i64).then_some(x as u64)
                    })
                    .collect()
            };
            let mut pts = Vec::new();
            for best in distinct_best(&all, &grid, cfg.top_q) {
                let (k0, k1, kc) = best.key;
                for a in around(k0, 0, grid.max_n) {
                    for b in around(k1, 0, grid.max_n) {
                        for c in around(kc, grid.min_c, grid.max_c) {
                            pts.push((a, b, c));
                        }
                    }
                }
            }
            pts
        };

        // Group the new points by policy so κ and π are computed once each.
        let mut cells: BTreeMap<(u64, u64), Vec<u64>> = BTreeMap::new();
        for key in points {
            if seen.insert(key) {
                cells.entry((key.0, key.1)).or_default().push(key.2);
            }
        }
        let cells: Vec<((u64, u64), Vec<u64>)> = cells.into_iter().collect();
        let results: Vec<(Vec<Light>, Vec<SkippedCell>)> = cells
            .par_iter()
            .map(|((k0, k1), cs)| sweep_cell(params, cfg, &grid, tol_eq, (*k0, *k1), cs, level))
            .collect();
        for (lights, skips) in results {
            all.extend(lights);
            skipped.extend(skips);
        }
        all.sort_by(rank);
        level_best.push(all.first().map_or(f64::INFINITY, |l| l.d));
    }

    let evaluated = all.len();
    let mut ranked = distinct_best(&all, &grid, cfg.keep.max(1))
        .into_iter()
        .map(|l| expand(params, cfg, tol_eq, l))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        a.d.total_cmp(&b.d)
            .then(a.policy.n0.total_cmp(&b.policy.n0))
            .then(a.policy.n1.total_cmp(&b.policy.n1))
            .then(a.c.total_cmp(&b.c))
    });

    Ok(SearchOutcome {
        ranked,
        level_best,
        evaluated,
        skipped,
        bounds: bnds,
        threshold_bound: threshold_bound(params),
        degenerate,
    })
}

/// The first `q` ranked points, skipping any that describe the same
/// behavior and lattice payoff as one already taken. Thresholds below one
/// all mean "always switch", so they are merged.
fn distinct_best<'a>(all: &'a [Light], grid: &Grid, q: usize) -> Vec<&'a Light> {
    let one = (1.0 / grid.unit_n).round() as u64;
    let mut taken = HashSet::new();
    all.iter()
        .filter(|l| taken.insert((l.key.0.max(one), l.key.1.max(one), l.key.2)))
        .take(q)
        .collect()
}

fn sweep_cell(
    params: &ModelParams,
    cfg: &SearchConfig,
    grid: &Grid,
    tol_eq: f64,
    (k0, k1): (u64, u64),
    cs: &[u64],
    level: usize,
) -> (Vec<Light>, Vec<SkippedCell>) {
    let policy = grid.policy(k0, k1);
    let skip = |c: Option<f64>, e: Error| SkippedCell {
        n0: policy.n0,
        n1: policy.n1,
        c,
        reason: e.to_string(),
    };
    let prepared = Truncation::new(cfg.nmax)
        .and_then(|t| calibrate_kappa(params, &policy, t, cfg.tol))
        .and_then(|cal| StoppingProblem::new(params, &policy, cal.kappa, cal.trunc).map(|p| (cal, p)));
    let (cal, problem) = match prepared {
        Ok(x) => x,
        Err(e) => return (Vec::new(), vec![skip(None, e)]),
    };
    let mut lights = Vec::with_capacity(cs.len());
    let mut skips = Vec::new();
    for &kc in cs {
        let c = grid.payoff(kc);
        match score(&problem, &cal.pi, &policy, c, cfg.tol, tol_eq) {
            Ok(s) => lights.push(Light {
                key: (k0, k1, kc),
                policy,
                c,
                d: s.d,
                level,
            }),
            Err(e) => skips.push(skip(Some(c), e)),
        }
    }
    if cfg.payoff_root {
        let (lo, hi) = (grid.root_lo, grid.payoff(grid.max_c));
        match payoff_refinements(&problem, &cal.pi, &policy, lo, hi, cfg.tol, tol_eq) {
            Ok(found) => lights.extend(found.into_iter().map(|(c, d)| Light {
                key: (k0, k1, ((c / grid.unit_c).round() as u64).clamp(grid.min_c, grid.max_c)),
                policy,
                c,
                d,
                level,
            })),
            Err(e) => skips.push(skip(None, e)),
        }
    }
    (lights, skips)
}

/// Payoff `C ∈ [lo, hi]` closest to solving `C̃(C) = C` for a fixed policy.
///
/// `C ↦ C̃(C) − C` is strictly decreasing (the slope of `C̃` is at most γ),
/// so the root is unique; it is bracketed and found by regula falsi with
/// the Illinois modification. An endpoint is returned when the root lies
/// outside `[lo, hi]`.
pub(crate) fn payoff_fixed_point(
    problem: &StoppingProblem,
    pi: &Distribution,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    let mut last: Option<ValueFunction> = None;
    let mut h = |c: f64| -> Result<f64> {
        let vf = match last.take() {
            Some(prev) => problem.solve_from(c, prev.vhat_levels().to_vec(), tol * 1e-2, DEFAULT_MAX_SWEEPS)?,
            None => problem.solve(c, tol * 1e-2, DEFAULT_MAX_SWEEPS)?,
        };
        let gap = c_tilde(pi, &vf) - c;
        last = Some(vf);
        Ok(gap)
    };
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (h(a)?, h(b)?);
    if fa <= 0.0 {
        return Ok(a);
    }
    if fb >= 0.0 {
        return Ok(b);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = h(c)?;
        if fc.abs() <= tol || (b - a) <= tol * 1e-3 {
            return Ok(c);
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    Ok((a * fb - b * fa) / (fb - fa))
}

/// Signed distance from `policy` to `b`: positive when the policy lies
/// above the box, negative below.
fn box_offset(policy: &ThresholdPolicy, b: &ThresholdBox) -> f64 {
    (0..2)
        .map(|z| {
            let n = [policy.n0, policy.n1][z];
            (n - b.hi[z]).max(0.0) - (b.lo[z] - n).max(0.0)
        })
        .sum()
}

/// Off-lattice payoffs worth scoring for one policy, with their `d`.
///
/// The first is the payoff fixed point. The optimal thresholds move down as
/// `C` grows, so when the policy sits outside its box at the fixed point,
/// bisection toward the box finds the nearest payoffs on either side of
/// the point where the box reaches the policy.
fn payoff_refinements(
    problem: &StoppingProblem,
    pi: &Distribution,
    policy: &ThresholdPolicy,
    lo: f64,
    hi: f64,
    tol: f64,
    tol_eq: f64,
) -> Result<Vec<(f64, f64)>> {
    let root = payoff_fixed_point(problem, pi, lo, hi, tol)?;
    let mut last: Option<ValueFunction> = None;
    let mut at = |c: f64| -> Result<(f64, f64, f64)> {
        let s = score_from(problem, pi, policy, c, last.as_ref(), tol, tol_eq)?;
        let off = box_offset(policy, &s.thresholds);
        let out = (s.d, s.dist, off);
        last = Some(s.vf);
        Ok(out)
    };
    let (d, dist, off) = at(root)?;
    let mut out = vec![(root, d)];
    if dist == 0.0 {
        return Ok(out);
    }
    let (mut inside, mut outside) = if off > 0.0 { (lo, root) } else { (hi, root) };
    let (_, dist_end, off_end) = at(inside)?;
    if off_end.signum() == off.signum() && dist_end > 0.0 {
        return Ok(out);
    }
    while (inside - outside).abs() > tol {
        let mid = 0.5 * (inside + outside);
        let (_, dist_mid, off_mid) = at(mid)?;
        if dist_mid == 0.0 || off_mid.signum() != off.signum() {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    for c in [inside, outside] {
        out.push((c, at(c)?.0));
    }
    Ok(out)
}

fn expand(params: &ModelParams, cfg: &SearchConfig, tol_eq: f64, l: &Light) -> Result<EquilibriumCandidate> {
    let cal = calibrate_kappa(params, &l.policy, Truncation::new(cfg.nmax)?, cfg.tol)?;
    let problem = StoppingProblem::new(params, &l.policy, cal.kappa, cal.trunc)?;
    let s = score(&problem, &cal.pi, &l.policy, l.c, cfg.tol, tol_eq)?;
    Ok(EquilibriumCandidate {
        policy: l.policy,
        c: l.c,
        kappa: cal.kappa,
        pi: cal.pi,
        vf: s.vf,
        thresholds: s.thresholds,
        c_tilde: s.c_tilde,
        dist: s.dist,
        d: s.d,
        level: l.level,
    })
}

/// Best `d` over a payoff grid for each policy on a square patch around
/// `center`, used to show how flat the residual is near a point. With
/// `payoff_root` set, each policy is also scored at its payoff fixed point
/// inside the range of `payoffs`.
pub fn local_landscape(
    params: &ModelParams,
    center: &ThresholdPolicy,
    radius: f64,
    step: f64,
    payoffs: &[f64],
    cfg: &SearchConfig,
) -> Result<Vec<(ThresholdPolicy, f64, f64)>> {
    if !(step > 0.0 && radius >= 0.0) {
        return Err(invalid("step", "landscape needs step > 0 and radius >= 0"));
    }
    let k = (radius / step + 1e-9).floor() as i64;
    let tol_eq = cfg.indifference_tol(params);
    let mut policies = Vec::new();
    for i in -k..=k {
        for j in -k..=k {
            let n0 = center.n0 + i as f64 * step;
            let n1 = center.n1 + j as f64 * step;
            if n0 >= 0.0 && n1 >= 0.0 {
                policies.push(ThresholdPolicy { n0, n1 });
            }
        }
    }
    let rows = policies
        .par_iter()
        .map(|policy| -> Result<(ThresholdPolicy, f64, f64)> {
            let cal = calibrate_kappa(params, policy, Truncation::new(cfg.nmax)?, cfg.tol)?;
            let problem = StoppingProblem::new(params, policy, cal.kappa, cal.trunc)?;
            let mut best = (f64::INFINITY, f64::NAN);
            let mut cs = payoffs.to_vec();
            if cfg.payoff_root && !payoffs.is_empty() {
                let lo = payoffs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                cs.push(payoff_fixed_point(&problem, &cal.pi, lo, hi, cfg.tol)?);
            }
            for &c in &cs {
                let s = score(&problem, &cal.pi, policy, c, cfg.tol, tol_eq)?;
                if s.d < best.0 {
                    best = (s.d, c);
                }
            }
            Ok((*policy, best.1, best.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RewardFn, RewardTable};
    use crate::stopping::value_iterate;

    #[test]
    fn c_tilde_point_mass() {
        let p = ModelParams::symmetric(1.0, RewardFn::InverseN).unwrap();
        let mut w = vec![[0.0; 2]; 5];
        w[0][1] = 1.0;
        let pi = Distribution::from_weights(0, w).unwrap();
        let mut vhat = vec![[0.0; 2]; 5];
        vhat[0][1] = 7.0;
        let vf = ValueFunction::from_vhat(&p, 1.0, vhat);
        assert_eq!(c_tilde(&pi, &vf), 7.0);
    }

    #[test]
    fn c_tilde_zero_reward() {
        let p = ModelParams::symmetric(1.0, RewardFn::Table(RewardTable::new(vec![]).unwrap())).unwrap();
        let policy = ThresholdPolicy::new(2.0, 2.0).unwrap();
        let cal = calibrate_kappa(&p, &policy, Truncation::default(), 1e-8).unwrap();
        let vf = value_iterate(&p, &policy, cal.kappa, 1.0, Truncation::default(), 1e-12).unwrap();
        assert!((c_tilde(&cal.pi, &vf) - 0.95).abs() < 1e-10);
    }

    #[test]
    fn bounds_examples() {
        let p = ModelParams::new(1.0, 0.95, 20.0, 1.0, 1.0, RewardFn::InverseN).unwrap();
        let b = bounds(&p);
        assert!((b.c_bar - 20.0).abs() < 1e-12);
        let expected = (1.0f64 / 22.0) * (1.0 / 22.0) * (-400.0f64).exp();
        assert!((b.c_under / expected - 1.0).abs() < 1e-12);
        assert!(0.0 < b.c_under && b.c_under < 1.0 && 1.0 < b.c_bar);
    }

    #[test]
    fn g_bound_rejects_small_n() {
        let p = ModelParams::symmetric(1.0, RewardFn::InverseN).unwrap();
        assert!(g_bound(&p, 2).is_err());
        assert!(g_bound(&p, 3).is_ok());
    }

    #[test]
    fn threshold_bound_is_out_of_reach_for_default_params() {
        let p = ModelParams::symmetric(0.1, RewardFn::InverseN).unwrap();
        assert_eq!(threshold_bound(&p), None);
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::default().validate().is_ok());
        let bad = SearchConfig {
            levels: 0,
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SearchConfig {
            resolution: 0.0,
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
