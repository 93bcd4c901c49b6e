//! Mean field equilibria of nomadic agents competing for location resources.
//!
//! Agents move between locations whose resource level flips between 0 and 1.
//! In the large-population limit each location evolves as an independent
//! Markov chain fed by Poisson arrivals, and an equilibrium is a threshold
//! policy, arrival rate, stationary law and switching payoff that are
//! mutually consistent.
//!
//! * [`model`]: parameters, rewards, threshold policies.
//! * [`chain`]: location generators, stationary laws, arrival calibration.
//! * [`stopping`]: the agent's optimal stopping problem.
//! * [`equilibrium`]: payoff consistency, bounds and the grid search.
//! * [`sim`]: finite-population event simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod equilibrium;
mod error;
pub mod model;
pub mod sim;
pub mod stopping;

pub use chain::{calibrate_kappa, mean_occupancy, stationary, Calibration, Distribution, Generator, Truncation};
pub use equilibrium::{search, EquilibriumCandidate, SearchConfig, SearchOutcome};
pub use error::{Error, Result};
pub use model::{reward_eval, ModelParams, Resource, RewardFn, RewardTable, ThresholdPolicy};
pub use sim::{simulate, welfare, SimConfig, SimResult};
pub use stopping::{
    event_probs, optimal_thresholds, threshold_distance, value_iterate, EventProbs, ThresholdBox, ValueFunction,
};
