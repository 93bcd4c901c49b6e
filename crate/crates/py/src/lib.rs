//! Python bindings for `mfe-core`.
//!
//! Distributions cross the boundary as lists of `(z, n, prob)` tuples and
//! value functions as lists of `[V̂(0, n), V̂(1, n)]` pairs for `n = 1..=nmax`.

use mfe_core::equilibrium::{self, local_landscape};
use mfe_core::stopping::default_indifference_tol;
use mfe_core::{
    calibrate_kappa, mean_occupancy, optimal_thresholds, value_iterate, welfare, Distribution, Resource, RewardFn,
    RewardTable, SearchConfig, SimConfig, Truncation,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: mfe_core::Error) -> PyErr {
    match e {
        mfe_core::Error::InvalidParameter { .. }
        | mfe_core::Error::EmptyLocation
        | mfe_core::Error::TruncationTooSmall { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn resource(z: u8) -> PyResult<Resource> {
    Resource::from_index(z as usize).ok_or_else(|| PyValueError::new_err(format!("z must be 0 or 1, got {z}")))
}

fn entries(pi: &Distribution) -> Vec<(u8, usize, f64)> {
    pi.iter().map(|(z, n, p)| (z.index() as u8, n, p)).collect()
}

fn from_entries(rows: &[(u8, usize, f64)]) -> PyResult<Distribution> {
    let first = rows
        .iter()
        .map(|r| r.1)
        .min()
        .ok_or_else(|| PyValueError::new_err("empty distribution"))?;
    let last = rows.iter().map(|r| r.1).max().unwrap_or(first);
    let mut w = vec![[0.0; 2]; last - first + 1];
    for &(z, n, p) in rows {
        w[n - first][resource(z)?.index()] += p;
    }
    Distribution::from_weights(first, w).map_err(to_py)
}

/// A reward given as a name or as a non-increasing table `[f(1), f(2), ...]`.
#[derive(FromPyObject)]
enum RewardArg {
    Name(String),
    Table(Vec<f64>),
}

fn reward(arg: RewardArg) -> PyResult<RewardFn> {
    match arg {
        RewardArg::Name(s) => match s.as_str() {
            "inverse_n" | "1/n" => Ok(RewardFn::InverseN),
            "inverse_n_squared" | "1/n^2" => Ok(RewardFn::InverseNSquared),
            "inverse_sqrt_n" | "1/sqrt(n)" => Ok(RewardFn::InverseSqrtN),
            _ => Err(PyValueError::new_err(format!("unknown reward {s:?}"))),
        },
        RewardArg::Table(v) => Ok(RewardFn::Table(RewardTable::new(v).map_err(to_py)?)),
    }
}

#[pyclass(name = "ModelParams", module = "mfe", frozen)]
struct PyModelParams {
    inner: mfe_core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (lam=1.0, gamma=0.95, beta=20.0, mu01=1.0, mu10=1.0, reward=RewardArg::Name("inverse_n".into())))]
    fn new(lam: f64, gamma: f64, beta: f64, mu01: f64, mu10: f64, reward: RewardArg) -> PyResult<Self> {
        let r = self::reward(reward)?;
        Ok(PyModelParams {
            inner: mfe_core::ModelParams::new(lam, gamma, beta, mu01, mu10, r).map_err(to_py)?,
        })
    }

    /// `λ = 1`, `γ = 0.95`, `β = 20` with both flip rates equal to `mu`.
    #[staticmethod]
    #[pyo3(signature = (mu, reward=RewardArg::Name("inverse_n".into())))]
    fn symmetric(mu: f64, reward: RewardArg) -> PyResult<Self> {
        Ok(PyModelParams {
            inner: mfe_core::ModelParams::symmetric(mu, self::reward(reward)?).map_err(to_py)?,
        })
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }
    #[getter]
    fn mu01(&self) -> f64 {
        self.inner.mu01
    }
    #[getter]
    fn mu10(&self) -> f64 {
        self.inner.mu10
    }
    #[getter]
    fn reward(&self) -> &'static str {
        self.inner.reward.label()
    }

    fn f(&self, n: usize) -> PyResult<f64> {
        mfe_core::reward_eval(&self.inner.reward, Resource::High, n).map_err(to_py)
    }

    /// `(C̄, C̲)`: the bounds on equilibrium switching payoffs.
    fn payoff_bounds(&self) -> (f64, f64) {
        let b = equilibrium::bounds(&self.inner);
        (b.c_bar, b.c_under)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ModelParams(lam={}, gamma={}, beta={}, mu01={}, mu10={}, reward={:?})",
            p.lambda,
            p.gamma,
            p.beta,
            p.mu01,
            p.mu10,
            p.reward.label()
        )
    }
}

#[pyclass(name = "ThresholdPolicy", module = "mfe", frozen)]
struct PyPolicy {
    inner: mfe_core::ThresholdPolicy,
}

#[pymethods]
impl PyPolicy {
    #[new]
    fn new(n0: f64, n1: f64) -> PyResult<Self> {
        Ok(PyPolicy {
            inner: mfe_core::ThresholdPolicy::new(n0, n1).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn always_switch() -> Self {
        PyPolicy {
            inner: mfe_core::ThresholdPolicy::always_switch(),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (nmax=200))]
    fn never_switch(nmax: usize) -> Self {
        PyPolicy {
            inner: mfe_core::ThresholdPolicy::never_switch(nmax),
        }
    }

    #[getter]
    fn n0(&self) -> f64 {
        self.inner.n0
    }
    #[getter]
    fn n1(&self) -> f64 {
        self.inner.n1
    }

    /// Probability of switching at a location with resource `z` and `n` agents.
    fn switch_prob(&self, z: u8, n: usize) -> PyResult<f64> {
        Ok(self.inner.switch_probability(resource(z)?, n))
    }

    fn __repr__(&self) -> String {
        format!("ThresholdPolicy({}, {})", self.inner.n0, self.inner.n1)
    }
}

#[pyclass(name = "Calibration", module = "mfe", frozen, get_all)]
struct PyCalibration {
    kappa: f64,
    pi: Vec<(u8, usize, f64)>,
    nmax: usize,
    mean_occupancy: f64,
    high_fraction: f64,
    boundary_mass: f64,
}

/// Arrival rate `κ` meeting the density `Σ n π = β` and the stationary law.
#[pyfunction]
#[pyo3(signature = (params, policy, nmax=200, tol=1e-9))]
fn calibrate(
    py: Python<'_>,
    params: &PyModelParams,
    policy: &PyPolicy,
    nmax: usize,
    tol: f64,
) -> PyResult<PyCalibration> {
    let (p, pol) = (params.inner.clone(), policy.inner);
    let cal = py
        .detach(|| calibrate_kappa(&p, &pol, Truncation::new(nmax)?, tol))
        .map_err(to_py)?;
    Ok(PyCalibration {
        kappa: cal.kappa,
        mean_occupancy: mean_occupancy(&cal.pi),
        high_fraction: cal.pi.high_marginal(),
        nmax: cal.trunc.nmax,
        boundary_mass: cal.boundary_mass,
        pi: entries(&cal.pi),
    })
}

#[pyclass(name = "ValueFunction", module = "mfe", frozen)]
struct PyValueFunction {
    inner: mfe_core::ValueFunction,
    c: f64,
    tol_eq: f64,
}

#[pymethods]
impl PyValueFunction {
    #[getter]
    fn nmax(&self) -> usize {
        self.inner.nmax()
    }

    /// `V̂(z, n)`: value just after a decision to stay, before the next event.
    fn vhat(&self, z: u8, n: usize) -> PyResult<f64> {
        self.check(n)?;
        Ok(self.inner.vhat(resource(z)?, n))
    }

    /// `V(z, n)`: value at a decision epoch.
    fn v(&self, z: u8, n: usize) -> PyResult<f64> {
        self.check(n)?;
        Ok(self.inner.v(resource(z)?, n))
    }

    fn vhat_table(&self) -> Vec<[f64; 2]> {
        self.inner.vhat_levels().to_vec()
    }

    /// `((lo0, hi0), (lo1, hi1))`: the optimal threshold intervals.
    #[pyo3(signature = (tol_eq=None))]
    fn optimal_thresholds(&self, tol_eq: Option<f64>) -> PyResult<((f64, f64), (f64, f64))> {
        let tol = tol_eq.unwrap_or(self.tol_eq);
        let b = optimal_thresholds(&self.inner, self.c, tol).map_err(to_py)?;
        Ok((b.interval(Resource::Low), b.interval(Resource::High)))
    }

    /// `Σ π(z, n) V̂(z, n + 1)`: the payoff a switching agent can expect.
    fn c_tilde(&self, pi: Vec<(u8, usize, f64)>) -> PyResult<f64> {
        Ok(equilibrium::c_tilde(&from_entries(&pi)?, &self.inner))
    }
}

impl PyValueFunction {
    fn check(&self, n: usize) -> PyResult<()> {
        if n == 0 || n > self.inner.nmax() {
            return Err(PyValueError::new_err(format!(
                "n must lie in 1..={}, got {n}",
                self.inner.nmax()
            )));
        }
        Ok(())
    }
}

/// Optimal stopping values for a focal agent when everyone else follows
/// `policy` and arrivals come at rate `kappa`.
#[pyfunction]
#[pyo3(signature = (params, policy, kappa, c, nmax=200, tol=1e-10))]
fn solve_stopping(
    py: Python<'_>,
    params: &PyModelParams,
    policy: &PyPolicy,
    kappa: f64,
    c: f64,
    nmax: usize,
    tol: f64,
) -> PyResult<PyValueFunction> {
    let (p, pol) = (params.inner.clone(), policy.inner);
    let vf = py
        .detach(|| value_iterate(&p, &pol, kappa, c, Truncation::new(nmax)?, tol))
        .map_err(to_py)?;
    Ok(PyValueFunction {
        inner: vf,
        c,
        tol_eq: default_indifference_tol(&params.inner),
    })
}

#[pyclass(name = "Candidate", module = "mfe", frozen, get_all)]
struct PyCandidate {
    n0: f64,
    n1: f64,
    c: f64,
    kappa: f64,
    c_tilde: f64,
    dist: f64,
    d: f64,
    level: usize,
    box_lo: (f64, f64),
    box_hi: (f64, f64),
    pi: Vec<(u8, usize, f64)>,
    vhat: Vec<[f64; 2]>,
}

#[pymethods]
impl PyCandidate {
    fn __repr__(&self) -> String {
        format!(
            "Candidate(n0={}, n1={}, c={}, d={:e}, kappa={})",
            self.n0, self.n1, self.c, self.d, self.kappa
        )
    }
}

impl From<&mfe_core::EquilibriumCandidate> for PyCandidate {
    fn from(c: &mfe_core::EquilibriumCandidate) -> Self {
        PyCandidate {
            n0: c.policy.n0,
            n1: c.policy.n1,
            c: c.c,
            kappa: c.kappa,
            c_tilde: c.c_tilde,
            dist: c.dist,
            d: c.d,
            level: c.level,
            box_lo: (c.thresholds.lo[0], c.thresholds.lo[1]),
            box_hi: (c.thresholds.hi[0], c.thresholds.hi[1]),
            pi: entries(&c.pi),
            vhat: c.vf.vhat_levels().to_vec(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn search_config(
    nhi: f64,
    resolution: f64,
    levels: usize,
    refinement_factor: usize,
    top_q: usize,
    tol: f64,
    nmax: usize,
    keep: usize,
) -> SearchConfig {
    SearchConfig {
        nhi,
        resolution,
        levels,
        refinement_factor,
        top_q,
        tol,
        nmax,
        keep,
        ..SearchConfig::default()
    }
}

/// Scores one `(policy, C)` point.
#[pyfunction]
#[pyo3(signature = (params, policy, c, nmax=200, tol=1e-6))]
fn evaluate(
    py: Python<'_>,
    params: &PyModelParams,
    policy: &PyPolicy,
    c: f64,
    nmax: usize,
    tol: f64,
) -> PyResult<PyCandidate> {
    let cfg = SearchConfig {
        nmax,
        tol,
        ..SearchConfig::default()
    };
    let (p, pol) = (params.inner.clone(), policy.inner);
    let cand = py.detach(|| equilibrium::evaluate(&p, &pol, c, &cfg)).map_err(to_py)?;
    Ok(PyCandidate::from(&cand))
}

/// Adaptive grid search; returns candidates sorted by `d`, best first.
#[pyfunction]
#[pyo3(signature = (params, nhi=50.0, resolution=1.0, levels=3, refinement_factor=5, top_q=5, tol=1e-6, nmax=200, keep=20))]
#[allow(clippy::too_many_arguments)]
fn search(
    py: Python<'_>,
    params: &PyModelParams,
    nhi: f64,
    resolution: f64,
    levels: usize,
    refinement_factor: usize,
    top_q: usize,
    tol: f64,
    nmax: usize,
    keep: usize,
) -> PyResult<Vec<PyCandidate>> {
    let cfg = search_config(nhi, resolution, levels, refinement_factor, top_q, tol, nmax, keep);
    let p = params.inner.clone();
    let outcome = py.detach(|| mfe_core::search(&p, &cfg)).map_err(to_py)?;
    Ok(outcome.ranked.iter().map(PyCandidate::from).collect())
}

/// `(n0, n1, best C, best d)` for each policy on a square patch around
/// `center`.
#[pyfunction]
#[pyo3(signature = (params, center, payoffs, radius=1.0, step=0.5, nmax=200, tol=1e-6))]
#[allow(clippy::too_many_arguments)]
fn landscape(
    py: Python<'_>,
    params: &PyModelParams,
    center: &PyPolicy,
    payoffs: Vec<f64>,
    radius: f64,
    step: f64,
    nmax: usize,
    tol: f64,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let cfg = SearchConfig {
        nmax,
        tol,
        ..SearchConfig::default()
    };
    let (p, pol) = (params.inner.clone(), center.inner);
    let rows = py
        .detach(|| local_landscape(&p, &pol, radius, step, &payoffs, &cfg))
        .map_err(to_py)?;
    Ok(rows.into_iter().map(|(q, c, d)| (q.n0, q.n1, c, d)).collect())
}

#[pyclass(name = "SimResult", module = "mfe", frozen, get_all)]
struct PySimResult {
    k: usize,
    agents: usize,
    mean_reward_per_epoch: f64,
    welfare: f64,
    high_fraction: f64,
    mean_occupancy: f64,
    decisions: u64,
    departures: u64,
    switches: u64,
    flips: u64,
    empirical: Vec<(u8, usize, f64)>,
}

#[pymethods]
impl PySimResult {
    /// Total variation distance between the empirical law and `pi`.
    fn tv_to(&self, pi: Vec<(u8, usize, f64)>) -> PyResult<f64> {
        Ok(from_entries(&self.empirical)?.total_variation(&from_entries(&pi)?))
    }
}

/// Finite-population simulation with `K` locations and `⌊βK⌋` agents.
#[pyfunction]
#[pyo3(signature = (params, policy, k=200, horizon=5000.0, burn_in=None, seed=0, allow_self_switch=false))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    params: &PyModelParams,
    policy: &PyPolicy,
    k: usize,
    horizon: f64,
    burn_in: Option<f64>,
    seed: u64,
    allow_self_switch: bool,
) -> PyResult<PySimResult> {
    let cfg = SimConfig {
        params: params.inner.clone(),
        policy: policy.inner,
        k,
        horizon,
        burn_in: burn_in.unwrap_or(0.2 * horizon),
        seed,
        snapshot_interval: horizon,
        allow_self_switch,
    };
    let r = py.detach(|| mfe_core::simulate(&cfg)).map_err(to_py)?;
    Ok(PySimResult {
        k: r.k,
        agents: r.agents,
        mean_reward_per_epoch: r.mean_reward_per_epoch,
        welfare: welfare(&r),
        high_fraction: r.empirical.high_marginal(),
        mean_occupancy: mean_occupancy(&r.empirical),
        decisions: r.events.decisions,
        departures: r.events.departures,
        switches: r.events.switches,
        flips: r.events.flips,
        empirical: entries(&r.empirical),
    })
}

#[pymodule]
fn mfe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyCalibration>()?;
    m.add_class::<PyValueFunction>()?;
    m.add_class::<PyCandidate>()?;
    m.add_class::<PySimResult>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(solve_stopping, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    m.add_function(wrap_pyfunction!(landscape, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
