//! Multi-objective primitives: return vectors, utility functions, the
//! optimality criteria and the environment contract shared by the planner,
//! the baselines and the oracles.

use std::fmt;
use std::ops::Index;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Opaque, environment-defined encoding of an observable state.
pub type StateKey = u64;

/// An n-dimensional return or reward. Scalar domains use n = 1.
#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReturnVector(SmallVec<[f64; 4]>);

impl ReturnVector {
    pub fn zeros(n: usize) -> Self {
        ReturnVector(SmallVec::from_elem(0.0, n))
    }

    pub fn filled(n: usize, value: f64) -> Self {
        ReturnVector(SmallVec::from_elem(value, n))
    }

    pub fn scalar(value: f64) -> Self {
        ReturnVector(SmallVec::from_slice(&[value]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }

    fn check_len(&self, other: &ReturnVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }

    /// Elementwise sum; both vectors must have the same length.
    pub fn checked_add(&self, other: &ReturnVector) -> Result<ReturnVector> {
        let mut out = self.clone();
        out.add_assign_checked(other)?;
        Ok(out)
    }

    pub fn add_assign_checked(&mut self, other: &ReturnVector) -> Result<()> {
        self.check_len(other)?;
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += *b;
        }
        Ok(())
    }

    pub fn checked_sub(&self, other: &ReturnVector) -> Result<ReturnVector> {
        self.check_len(other)?;
        Ok(self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn scaled(&self, factor: f64) -> ReturnVector {
        self.0.iter().map(|v| v * factor).collect()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// True when every component of `self` is at least the matching
    /// component of `other`.
    pub fn dominates_weakly(&self, other: &ReturnVector) -> bool {
        self.len() == other.len() && self.0.iter().zip(other.0.iter()).all(|(a, b)| a >= b)
    }
}

impl From<Vec<f64>> for ReturnVector {
    fn from(v: Vec<f64>) -> Self {
        ReturnVector(SmallVec::from_vec(v))
    }
}

impl From<&[f64]> for ReturnVector {
    fn from(v: &[f64]) -> Self {
        ReturnVector(SmallVec::from_slice(v))
    }
}

impl<const N: usize> From<[f64; N]> for ReturnVector {
    fn from(v: [f64; N]) -> Self {
        ReturnVector(SmallVec::from_slice(&v))
    }
}

impl FromIterator<f64> for ReturnVector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        ReturnVector(iter.into_iter().collect())
    }
}

impl Index<usize> for ReturnVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Debug for ReturnVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// Elementwise fold of per-step rewards into an accrued return.
pub fn accumulate_returns(accrued: &ReturnVector, step_reward: &ReturnVector) -> Result<ReturnVector> {
    accrued.checked_add(step_reward)
}

/// Optimality criterion: utility of each full return (ESR) or utility of
/// the expected return (SER).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Esr,
    Ser,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Esr => f.write_str("esr"),
            Criterion::Ser => f.write_str("ser"),
        }
    }
}

/// Declarative form of a utility function, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `sum_o w_o r_o`.
    Linear { weights: Vec<f64> },
    /// Risk-averse `1 - exp(-r)` on a scalar return.
    Exponential,
    /// `min(fish, floor(wood / 2))` over `[fish, wood]`.
    Fishwood,
    /// Largest `c` with `r - c e >= 0`, where `e` is the unit target direction.
    Target { target: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Linear(Vec<f64>),
    Exponential,
    Fishwood,
    Target { direction: Vec<f64> },
}

/// A validated utility function. Evaluation is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityFunction {
    spec: UtilitySpec,
    kind: Kind,
}

const FEASIBILITY_RTOL: f64 = 1e-9;

impl UtilityFunction {
    pub fn new(spec: UtilitySpec) -> Result<Self> {
        let kind = match &spec {
            UtilitySpec::Linear { weights } => {
                if weights.is_empty() {
                    return Err(Error::contract("linear utility needs at least one weight"));
                }
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::contract("linear utility weights must be finite"));
                }
                Kind::Linear(weights.clone())
            }
            UtilitySpec::Exponential => Kind::Exponential,
            UtilitySpec::Fishwood => Kind::Fishwood,
            UtilitySpec::Target { target } => {
                let norm = target.iter().map(|v| v * v).sum::<f64>().sqrt();
                if target.is_empty() || !norm.is_finite() || norm == 0.0 {
                    return Err(Error::contract("target vector must be finite and non-zero"));
                }
                if !target.iter().any(|v| *v > 0.0) {
                    // Without a positive component the feasible set for c is unbounded above.
                    return Err(Error::contract(
                        "target vector needs at least one positive component",
                    ));
                }
                Kind::Target {
                    direction: target.iter().map(|v| v / norm).collect(),
                }
            }
        };
        Ok(UtilityFunction { spec, kind })
    }

    pub fn linear(weights: Vec<f64>) -> Result<Self> {
        Self::new(UtilitySpec::Linear { weights })
    }

    pub fn exponential() -> Self {
        Self::new(UtilitySpec::Exponential).expect("exponential utility is always valid")
    }

    pub fn fishwood() -> Self {
        Self::new(UtilitySpec::Fishwood).expect("fishwood utility is always valid")
    }

    pub fn target(target: Vec<f64>) -> Result<Self> {
        Self::new(UtilitySpec::Target { target })
    }

    pub fn spec(&self) -> &UtilitySpec {
        &self.spec
    }

    pub fn objectives(&self) -> usize {
        match &self.kind {
            Kind::Linear(w) => w.len(),
            Kind::Exponential => 1,
            Kind::Fishwood => 2,
            Kind::Target { direction } => direction.len(),
        }
    }

    /// True when the utility commutes with expectation.
    pub fn is_linear(&self) -> bool {
        matches!(self.kind, Kind::Linear(_))
    }

    /// Unit direction `e` of a target-vector utility.
    pub fn target_direction(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::Target { direction } => Some(direction),
            _ => None,
        }
    }

    pub fn evaluate(&self, r: &ReturnVector) -> Result<f64> {
        self.evaluate_slice(r.as_slice())
    }

    pub fn evaluate_slice(&self, r: &[f64]) -> Result<f64> {
        let expected = self.objectives();
        if r.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: r.len(),
            });
        }
        Ok(match &self.kind {
            Kind::Linear(w) => w.iter().zip(r).map(|(w, r)| w * r).sum(),
            Kind::Exponential => 1.0 - (-r[0]).exp(),
            Kind::Fishwood => r[0].min((r[1] / 2.0).floor()),
            Kind::Target { direction } => max_target_scale(r, direction),
        })
    }
}

impl Serialize for UtilityFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.spec.serialize(s)
    }
}

impl<'de> Deserialize<'de> for UtilityFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = UtilitySpec::deserialize(d)?;
        UtilityFunction::new(spec).map_err(serde::de::Error::custom)
    }
}

/// Largest `c >= 0` such that `r - c * direction >= 0` componentwise, or 0
/// when the constraint system has no non-negative solution. Components with
/// a zero direction only require `r_o >= 0`.
fn max_target_scale(r: &[f64], direction: &[f64]) -> f64 {
    let mut upper = f64::INFINITY;
    let mut lower = 0.0_f64;
    for (&ro, &eo) in r.iter().zip(direction) {
        if eo > 0.0 {
            upper = upper.min(ro / eo);
        } else if eo < 0.0 {
            lower = lower.max(ro / eo);
        } else if ro < 0.0 {
            return 0.0;
        }
    }
    // Treasure-style and time-style constraints meet at a single point when
    // r is collinear with the target; allow for rounding in the two quotients.
    let slack = FEASIBILITY_RTOL * upper.abs().max(1.0);
    if upper.is_finite() && upper + slack >= lower {
        upper.max(0.0)
    } else {
        0.0
    }
}

/// Largest `c >= 0` with `r - c * r_target/|r_target| >= 0`.
pub fn target_vector_utility(r: &ReturnVector, r_target: &ReturnVector) -> Result<f64> {
    if r.len() != r_target.len() {
        return Err(Error::DimensionMismatch {
            expected: r_target.len(),
            actual: r.len(),
        });
    }
    UtilityFunction::target(r_target.as_slice().to_vec())?.evaluate(r)
}

/// One sampled transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: StateKey,
    pub reward: ReturnVector,
    pub terminal: bool,
}

/// A finite-horizon, undiscounted multi-objective environment.
///
/// All stochasticity comes from the random stream passed to [`reset`] and
/// [`step`]; cloning an environment snapshots its current state so the
/// planner can simulate from it without touching the live episode.
///
/// [`reset`]: Environment::reset
/// [`step`]: Environment::step
pub trait Environment: Clone + Send + Sync {
    fn objectives(&self) -> usize;

    /// Number of actions available in the current state.
    fn num_actions(&self) -> usize;

    /// Maximum episode length in timesteps.
    fn horizon(&self) -> usize;

    /// Draws a start state from the initial-state distribution.
    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StateKey;

    fn state(&self) -> StateKey;

    fn timestep(&self) -> usize;

    fn is_terminal(&self) -> bool;

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Step>;
}
