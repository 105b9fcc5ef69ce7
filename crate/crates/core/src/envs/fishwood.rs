//! Fishwood: catch fish at the river, gather wood in the woods. A fish is
//! only worth something once two pieces of wood are available to cook it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Enumerable, Outcome};
use crate::error::{Error, Result};
use crate::mo::{Environment, ReturnVector, StateKey, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    River,
    Woods,
}

impl Location {
    fn other(self) -> Self {
        match self {
            Location::River => Location::Woods,
            Location::Woods => Location::River,
        }
    }
}

pub const STAY: usize = 0;
pub const MOVE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FishwoodParams {
    pub p_fish: f64,
    pub p_wood: f64,
    pub horizon: usize,
    pub start: Location,
}

impl Default for FishwoodParams {
    fn default() -> Self {
        FishwoodParams {
            p_fish: 0.25,
            p_wood: 0.65,
            horizon: 13,
            start: Location::River,
        }
    }
}

impl FishwoodParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_fish", self.p_fish), ("p_wood", self.p_wood)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("fishwood {name} must lie in [0, 1], got {p}")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::config("fishwood horizon must be at least 1"));
        }
        Ok(())
    }
}

/// Objectives are `[fish, wood]`. Actions are [`STAY`] and [`MOVE`]; the
/// catch is attempted at the location the action leads to.
#[derive(Debug, Clone, PartialEq)]
pub struct Fishwood {
    params: FishwoodParams,
    location: Location,
    t: usize,
}

impl Fishwood {
    pub fn new(params: FishwoodParams) -> Result<Self> {
        params.validate()?;
        Ok(Fishwood {
            location: params.start,
            params,
            t: 0,
        })
    }

    pub fn params(&self) -> &FishwoodParams {
        &self.params
    }

    pub fn location(&self) -> Location {
        self.location
    }

    /// Places the agent at an arbitrary point of an episode.
    pub fn set_position(&mut self, location: Location, t: usize) {
        self.location = location;
        self.t = t.min(self.params.horizon);
    }

    pub fn state_key_of(location: Location) -> StateKey {
        match location {
            Location::River => 0,
            Location::Woods => 1,
        }
    }

    fn destination(&self, action: usize) -> Result<Location> {
        match action {
            STAY => Ok(self.location),
            MOVE => Ok(self.location.other()),
            _ => Err(Error::InvalidAction { action, available: 2 }),
        }
    }

    fn success_reward(location: Location) -> ReturnVector {
        match location {
            Location::River => ReturnVector::from([1.0, 0.0]),
            Location::Woods => ReturnVector::from([0.0, 1.0]),
        }
    }

    fn success_probability(&self, location: Location) -> f64 {
        match location {
            Location::River => self.params.p_fish,
            Location::Woods => self.params.p_wood,
        }
    }
}

impl Environment for Fishwood {
    fn objectives(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn reset<R: Rng + ?Sized>(&mut self, _rng: &mut R) -> StateKey {
        self.location = self.params.start;
        self.t = 0;
        self.state()
    }

    fn state(&self) -> StateKey {
        Self::state_key_of(self.location)
    }

    fn timestep(&self) -> usize {
        self.t
    }

    fn is_terminal(&self) -> bool {
        self.t >= self.params.horizon
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Step> {
        if self.is_terminal() {
            return Err(Error::contract("fishwood episode already terminated"));
        }
        let dest = self.destination(action)?;
        let success = rng.gen::<f64>() < self.success_probability(dest);
        self.location = dest;
        self.t += 1;
        Ok(Step {
            state: self.state(),
            reward: if success {
                Self::success_reward(dest)
            } else {
                ReturnVector::zeros(2)
            },
            terminal: self.is_terminal(),
        })
    }
}

impl Enumerable for Fishwood {
    fn outcomes(&self, action: usize) -> Result<Vec<Outcome<Self>>> {
        let dest = self.destination(action)?;
        let mut next = self.clone();
        next.location = dest;
        next.t += 1;
        let p = self.success_probability(dest);
        Ok(vec![
            Outcome {
                probability: p,
                reward: Self::success_reward(dest),
                next: next.clone(),
            },
            Outcome {
                probability: 1.0 - p,
                reward: ReturnVector::zeros(2),
                next,
            },
        ])
    }
}
