//! Small explicit MDPs with listed transition tables, used to check the
//! planner against exhaustive enumeration.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Enumerable, Outcome};
use crate::error::{Error, Result};
use crate::mo::{Environment, ReturnVector, StateKey, Step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularOutcome {
    pub probability: f64,
    pub next: usize,
    pub reward: Vec<f64>,
}

/// `transitions[state][action]` lists the outcomes of that action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSpec {
    pub objectives: usize,
    pub horizon: usize,
    pub start: usize,
    pub transitions: Vec<Vec<Vec<TabularOutcome>>>,
}

impl TabularSpec {
    pub fn validate(&self) -> Result<()> {
        if self.transitions.is_empty() || self.start >= self.transitions.len() {
            return Err(Error::config("tabular MDP needs a valid start state"));
        }
        if self.horizon == 0 || self.objectives == 0 {
            return Err(Error::config("tabular MDP needs a positive horizon and objective count"));
        }
        let n = self.transitions.len();
        for (s, row) in self.transitions.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::config(format!("state {s} has no actions")));
            }
            for (a, outs) in row.iter().enumerate() {
                let total: f64 = outs.iter().map(|o| o.probability).sum();
                if outs.is_empty() || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!("({s}, {a}) probabilities sum to {total}")));
                }
                if outs
                    .iter()
                    .any(|o| o.next >= n || o.reward.len() != self.objectives || o.probability < 0.0)
                {
                    return Err(Error::config(format!("({s}, {a}) has a malformed outcome")));
                }
            }
        }
        Ok(())
    }

    /// Random instance with up to the given numbers of states, actions per
    /// state, outcomes per action and steps. Scalar rewards are drawn from
    /// `{0, 0.25, 0.5, 0.75, 1}`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        max_states: usize,
        max_actions: usize,
        max_outcomes: usize,
        max_horizon: usize,
    ) -> Self {
        let states = rng.gen_range(1..=max_states);
        let horizon = rng.gen_range(1..=max_horizon);
        let transitions = (0..states)
            .map(|_| {
                let actions = rng.gen_range(1..=max_actions);
                (0..actions)
                    .map(|_| {
                        let k = rng.gen_range(1..=max_outcomes);
                        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
                        let total: f64 = weights.iter().sum();
                        let mut outs: Vec<TabularOutcome> = weights
                            .iter()
                            .map(|w| TabularOutcome {
                                probability: w / total,
                                next: rng.gen_range(0..states),
                                reward: vec![rng.gen_range(0..5) as f64 * 0.25],
                            })
                            .collect();
                        // absorb rounding so the probabilities sum to one exactly enough
                        let drift: f64 = 1.0 - outs.iter().map(|o| o.probability).sum::<f64>();
                        outs[0].probability += drift;
                        outs
                    })
                    .collect()
            })
            .collect();
        TabularSpec {
            objectives: 1,
            horizon,
            start: 0,
            transitions,
        }
    }

    /// Number of reachable `(state, t)` pairs from the start state.
    pub fn reachable_pairs(&self) -> usize {
        let mut layer = vec![false; self.transitions.len()];
        layer[self.start] = true;
        let mut total = 1;
        for _ in 1..self.horizon {
            let mut next = vec![false; self.transitions.len()];
            for (s, on) in layer.iter().enumerate() {
                if *on {
                    for outs in &self.transitions[s] {
                        for o in outs {
                            next[o.next] = true;
                        }
                    }
                }
            }
            total += next.iter().filter(|b| **b).count();
            layer = next;
        }
        total
    }
}

#[derive(Debug, Clone)]
pub struct TabularMdp {
    spec: Arc<TabularSpec>,
    state: usize,
    t: usize,
}

impl TabularMdp {
    pub fn new(spec: TabularSpec) -> Result<Self> {
        spec.validate()?;
        Ok(TabularMdp {
            state: spec.start,
            spec: Arc::new(spec),
            t: 0,
        })
    }

    pub fn spec(&self) -> &TabularSpec {
        &self.spec
    }

    fn row(&self, action: usize) -> Result<&[TabularOutcome]> {
        let actions = &self.spec.transitions[self.state];
        actions.get(action).map(|v| v.as_slice()).ok_or(Error::InvalidAction {
            action,
            available: actions.len(),
        })
    }
}

impl Environment for TabularMdp {
    fn objectives(&self) -> usize {
        self.spec.objectives
    }

    fn num_actions(&self) -> usize {
        self.spec.transitions[self.state].len()
    }

    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn reset<R: Rng + ?Sized>(&mut self, _rng: &mut R) -> StateKey {
        self.state = self.spec.start;
        self.t = 0;
        self.state()
    }

    fn state(&self) -> StateKey {
        self.state as StateKey
    }

    fn timestep(&self) -> usize {
        self.t
    }

    fn is_terminal(&self) -> bool {
        self.t >= self.spec.horizon
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Step> {
        if self.is_terminal() {
            return Err(Error::contract("tabular episode already terminated"));
        }
        let outs = self.row(action)?;
        let mut x = rng.gen::<f64>();
        let mut pick = &outs[outs.len() - 1];
        for o in outs {
            if x < o.probability {
                pick = o;
                break;
            }
            x -= o.probability;
        }
        let reward = ReturnVector::from(pick.reward.as_slice());
        self.state = pick.next;
        self.t += 1;
        Ok(Step {
            state: self.state(),
            reward,
            terminal: self.is_terminal(),
        })
    }
}

impl Enumerable for TabularMdp {
    fn outcomes(&self, action: usize) -> Result<Vec<Outcome<Self>>> {
        Ok(self
            .row(action)?
            .iter()
            .map(|o| {
                let mut next = self.clone();
                next.state = o.next;
                next.t += 1;
                Outcome {
                    probability: o.probability,
                    reward: ReturnVector::from(o.reward.as_slice()),
                    next,
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_instances_respect_their_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let spec = TabularSpec::random(&mut rng, 5, 3, 3, 4);
            spec.validate().unwrap();
            assert!(spec.transitions.len() <= 5 && spec.horizon <= 4);
            assert!(spec.transitions.iter().all(|r| r.len() <= 3 && r.iter().all(|o| o.len() <= 3)));
            assert!(spec.reachable_pairs() <= 200);
        }
    }

    #[test]
    fn sampling_follows_the_table() {
        let spec = TabularSpec {
            objectives: 1,
            horizon: 1,
            start: 0,
            transitions: vec![vec![vec![
                TabularOutcome {
                    probability: 0.3,
                    next: 0,
                    reward: vec![1.0],
                },
                TabularOutcome {
                    probability: 0.7,
                    next: 0,
                    reward: vec![0.0],
                },
            ]]],
        };
        let mut env = TabularMdp::new(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 20_000;
        let mut hits = 0;
        for _ in 0..n {
            env.reset(&mut rng);
            hits += (env.step(0, &mut rng).unwrap().reward[0] == 1.0) as usize;
        }
        let f = hits as f64 / n as f64;
        assert!((f - 0.3).abs() < 0.015, "{f}");
    }
}
