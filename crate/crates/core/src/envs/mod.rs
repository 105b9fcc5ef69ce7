//! Benchmark environments.

pub mod ddst;
pub mod fishwood;
pub mod redeed;
pub mod risk;
pub mod tabular;

use crate::error::Result;
use crate::mo::{Environment, ReturnVector};

pub use ddst::{DangerousDst, DdstMap};
pub use fishwood::{Fishwood, FishwoodParams, Location};
pub use redeed::{Redeed, RedeedParams};
pub use risk::{RiskMdp, RiskMdpParams, StockTransition};
pub use tabular::{TabularMdp, TabularOutcome, TabularSpec};

/// One exactly-weighted outcome of an action.
#[derive(Debug, Clone)]
pub struct Outcome<E> {
    pub probability: f64,
    pub reward: ReturnVector,
    /// The environment after the transition.
    pub next: E,
}

/// Environments whose transition distribution can be listed exactly, which
/// is what the exhaustive oracles need.
pub trait Enumerable: Environment + Sized {
    fn outcomes(&self, action: usize) -> Result<Vec<Outcome<Self>>>;
}

/// Presents an environment with each step's reward replaced by its utility
/// `[u(r_t)]`, so a linear `[1]` utility over the cumulative return sums
/// per-step utilities.
#[derive(Debug, Clone)]
pub struct PerStepUtility<E> {
    inner: E,
    utility: crate::mo::UtilityFunction,
}

impl<E: Environment> PerStepUtility<E> {
    pub fn new(inner: E, utility: crate::mo::UtilityFunction) -> Self {
        PerStepUtility { inner, utility }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Environment> Environment for PerStepUtility<E> {
    fn objectives(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn reset<R: rand::Rng + ?Sized>(&mut self, rng: &mut R) -> crate::mo::StateKey {
        self.inner.reset(rng)
    }

    fn state(&self) -> crate::mo::StateKey {
        self.inner.state()
    }

    fn timestep(&self) -> usize {
        self.inner.timestep()
    }

    fn is_terminal(&self) -> bool {
        self.inner.is_terminal()
    }

    fn step<R: rand::Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<crate::mo::Step> {
        let mut step = self.inner.step(action, rng)?;
        step.reward = ReturnVector::scalar(self.utility.evaluate(&step.reward)?);
        Ok(step)
    }
}

impl<E: Enumerable> Enumerable for PerStepUtility<E> {
    fn outcomes(&self, action: usize) -> Result<Vec<Outcome<Self>>> {
        self.inner
            .outcomes(action)?
            .into_iter()
            .map(|o| {
                Ok(Outcome {
                    probability: o.probability,
                    reward: ReturnVector::scalar(self.utility.evaluate(&o.reward)?),
                    next: PerStepUtility::new(o.next, self.utility.clone()),
                })
            })
            .collect()
    }
}
