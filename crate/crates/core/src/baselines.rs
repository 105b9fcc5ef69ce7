//! Tabular baselines: Q-learning on a scalar learning signal and scalarised
//! multi-objective Q-learning, both undiscounted and keyed on
//! `(state, timestep)`.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mo::{Environment, ReturnVector, StateKey, UtilityFunction};

/// Exploration rate as a function of the (0-based) episode number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonSchedule {
    Fixed { epsilon: f64 },
    /// `base^episode`.
    Decay { base: f64 },
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize) -> f64 {
        match *self {
            EpsilonSchedule::Fixed { epsilon } => epsilon,
            EpsilonSchedule::Decay { base } => base.powi(episode.min(i32::MAX as usize) as i32),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            EpsilonSchedule::Fixed { epsilon } => (0.0..=1.0).contains(&epsilon),
            EpsilonSchedule::Decay { base } => (0.0..=1.0).contains(&base),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("epsilon schedule values must lie in [0, 1]"))
        }
    }
}

/// How a vector reward becomes the scalar signal Q-learning is trained on.
#[derive(Debug, Clone, PartialEq)]
pub enum LearningSignal {
    /// The reward's only component.
    Raw,
    /// `w . r` per step.
    Linear(Vec<f64>),
    /// The utility of each step's reward on its own.
    PerStepUtility(UtilityFunction),
}

impl LearningSignal {
    pub fn scalarise(&self, r: &ReturnVector) -> Result<f64> {
        match self {
            LearningSignal::Raw => {
                if r.len() != 1 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        actual: r.len(),
                    });
                }
                Ok(r[0])
            }
            LearningSignal::Linear(w) => {
                if w.len() != r.len() {
                    return Err(Error::DimensionMismatch {
                        expected: w.len(),
                        actual: r.len(),
                    });
                }
                Ok(w.iter().zip(r.iter()).map(|(w, r)| w * r).sum())
            }
            LearningSignal::PerStepUtility(u) => u.evaluate(r),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            LearningSignal::Raw => "raw per-step reward".into(),
            LearningSignal::Linear(w) => format!("linear scalarisation {w:?} of the per-step reward"),
            LearningSignal::PerStepUtility(_) => "utility of each per-step reward".into(),
        }
    }
}

pub type QKey = (StateKey, usize);

/// Action values per `(state, timestep)`, each a vector of `width`
/// components; unvisited entries read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    width: usize,
    pub alpha: f64,
    values: HashMap<QKey, Vec<f64>>,
}

impl QTable {
    pub fn new(width: usize, alpha: f64) -> Self {
        QTable {
            width,
            alpha,
            values: HashMap::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value vector of `(key, action)`.
    pub fn get(&self, key: QKey, action: usize) -> &[f64] {
        const ZEROS: [f64; 8] = [0.0; 8];
        match self.values.get(&key) {
            Some(row) if (action + 1) * self.width <= row.len() => &row[action * self.width..(action + 1) * self.width],
            _ if self.width <= ZEROS.len() => &ZEROS[..self.width],
            _ => panic!("q-table width above 8 is unsupported"),
        }
    }

    pub fn scalar(&self, key: QKey, action: usize) -> f64 {
        self.get(key, action)[0]
    }

    fn entry(&mut self, key: QKey, action: usize) -> &mut [f64] {
        let w = self.width;
        let row = self.values.entry(key).or_default();
        if row.len() < (action + 1) * w {
            row.resize((action + 1) * w, 0.0);
        }
        &mut row[action * w..(action + 1) * w]
    }

    /// `Q(s, a) += alpha (r + Q(s', a_next) (1 - done) - Q(s, a))`,
    /// componentwise. `next` is `(s', a_next)` and ignored when `done`.
    pub fn update(&mut self, key: QKey, action: usize, reward: &[f64], next: Option<(QKey, usize)>, done: bool) -> Result<()> {
        if reward.len() != self.width {
            return Err(Error::DimensionMismatch {
                expected: self.width,
                actual: reward.len(),
            });
        }
        let mut boot = [0.0; 8];
        if let (false, Some((k, a))) = (done, next) {
            boot[..self.width].copy_from_slice(self.get(k, a));
        }
        let alpha = self.alpha;
        for (i, q) in self.entry(key, action).iter_mut().enumerate() {
            *q += alpha * (reward[i] + boot[i] - *q);
        }
        Ok(())
    }

    /// Greedy action under `score`; the lowest index wins ties.
    pub fn argmax(&self, key: QKey, actions: usize, score: impl Fn(&[f64]) -> f64) -> usize {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for a in 0..actions {
            let v = score(self.get(key, a));
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }
}

/// Standard scalar Q-learning update with `max_a' Q(s', a')` bootstrap.
pub fn q_update(table: &mut QTable, s: QKey, a: usize, r: f64, s_next: QKey, next_actions: usize, done: bool) -> Result<()> {
    let next = (!done && next_actions > 0).then(|| (s_next, table.argmax(s_next, next_actions, |q| q[0])));
    table.update(s, a, &[r], next, done)
}

/// Utility-greedy action over vector Q-values, explored with probability
/// `epsilon`.
pub fn scalarised_q_select<R: Rng + ?Sized>(
    table: &QTable,
    s: QKey,
    actions: usize,
    u: &UtilityFunction,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    if rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..actions);
    }
    table.argmax(s, actions, |q| u.evaluate_slice(q).unwrap_or(f64::NEG_INFINITY))
}

#[derive(Debug, Clone, PartialEq)]
pub enum QMode {
    /// Scalar table trained on a per-step learning signal.
    Scalar(LearningSignal),
    /// Vector table selected through the utility.
    Scalarised(UtilityFunction),
}

/// Budget counters kept by a learner.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Budget {
    pub real_steps: u64,
    pub simulated_episodes: u64,
}

/// A Q-learning agent that, before every real step, trains on `n_exec`
/// simulated episodes started from a copy of the current state.
#[derive(Debug, Clone)]
pub struct QLearner {
    pub table: QTable,
    pub mode: QMode,
    pub epsilon: EpsilonSchedule,
    pub n_exec: usize,
    pub budget: Budget,
}

impl QLearner {
    pub fn new(mode: QMode, objectives: usize, alpha: f64, epsilon: EpsilonSchedule, n_exec: usize) -> Result<Self> {
        epsilon.validate()?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config("learning rate must lie in (0, 1]"));
        }
        let width = match &mode {
            QMode::Scalar(_) => 1,
            QMode::Scalarised(u) => {
                if u.objectives() != objectives {
                    return Err(Error::DimensionMismatch {
                        expected: objectives,
                        actual: u.objectives(),
                    });
                }
                objectives
            }
        };
        if width > 8 {
            return Err(Error::config("vector q-learning supports at most 8 objectives"));
        }
        Ok(QLearner {
            table: QTable::new(width, alpha),
            mode,
            epsilon,
            n_exec,
            budget: Budget::default(),
        })
    }

    fn key<E: Environment>(env: &E) -> QKey {
        (env.state(), env.timestep())
    }

    fn greedy(&self, key: QKey, actions: usize) -> usize {
        match &self.mode {
            QMode::Scalar(_) => self.table.argmax(key, actions, |q| q[0]),
            QMode::Scalarised(u) => self.table.argmax(key, actions, |q| u.evaluate_slice(q).unwrap_or(f64::NEG_INFINITY)),
        }
    }

    pub fn select<E: Environment, R: Rng + ?Sized>(&self, env: &E, epsilon: f64, rng: &mut R) -> usize {
        let actions = env.num_actions();
        if rng.gen::<f64>() < epsilon {
            rng.gen_range(0..actions)
        } else {
            self.greedy(Self::key(env), actions)
        }
    }

    /// Learns from one transition `env_before --action--> env_after`.
    pub fn observe<E: Environment>(&mut self, key: QKey, action: usize, reward: &ReturnVector, env_after: &E) -> Result<()> {
        let done = env_after.is_terminal();
        let next_key = Self::key(env_after);
        match &self.mode {
            QMode::Scalar(signal) => {
                let r = signal.scalarise(reward)?;
                q_update(&mut self.table, key, action, r, next_key, env_after.num_actions(), done)
            }
            QMode::Scalarised(_) => {
                let next = (!done).then(|| (next_key, self.greedy(next_key, env_after.num_actions())));
                self.table.update(key, action, reward.as_slice(), next, done)
            }
        }
    }

    /// One simulated ε-greedy training episode from `env`'s current state.
    pub fn train_episode<E: Environment, R: Rng + ?Sized>(&mut self, env: &E, epsilon: f64, rng: &mut R) -> Result<()> {
        let mut sim = env.clone();
        while !sim.is_terminal() {
            let key = Self::key(&sim);
            let a = self.select(&sim, epsilon, rng);
            let step = sim.step(a, rng)?;
            self.observe(key, a, &step.reward, &sim)?;
        }
        self.budget.simulated_episodes += 1;
        Ok(())
    }

    /// Spends the per-step budget on simulation, then picks the real action
    /// ε-greedily.
    pub fn act<E: Environment, R: Rng + ?Sized>(&mut self, env: &E, episode: usize, rng: &mut R) -> Result<usize> {
        let eps = self.epsilon.at(episode);
        for _ in 0..self.n_exec {
            self.train_episode(env, eps, rng)?;
        }
        self.budget.real_steps += 1;
        Ok(self.select(env, eps, rng))
    }
}
