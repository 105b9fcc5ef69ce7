//! Distributional Monte Carlo tree search.
//!
//! An expectimax planner whose chance nodes carry bootstrap posteriors over
//! the utility of complete episode returns (ESR) or over expected return
//! vectors (SER), together with tabular baselines, benchmark environments,
//! exact oracles and a reproducible experiment harness.

pub mod baselines;
pub mod bts;
pub mod envs;
pub mod error;
pub mod harness;
pub mod mo;
pub mod oracle;
pub mod tree;

pub use bts::{greedy_select, thompson_select, BootstrapDistribution};
pub use error::{Error, Result};
pub use mo::{accumulate_returns, target_vector_utility, Criterion, Environment, ReturnVector, StateKey, Step, UtilityFunction, UtilitySpec};
pub use tree::{Planner, PlannerConfig, TreeReuse};

/// Random stream used throughout the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;
