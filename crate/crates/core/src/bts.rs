//! Bootstrap Thompson sampling.
//!
//! A [`BootstrapDistribution`] keeps `J` replicates of running `(alpha, beta)`
//! statistics. Every observation is absorbed by each replicate independently
//! with probability 1/2 (online Bernoulli re-weighting), so the spread of the
//! replicate means `alpha_j / beta_j` approximates a posterior over the mean.
//!
//! Under ESR the observation is the scalar utility of a full return; under SER
//! it is the return vector itself and the utility is applied to the replicate
//! mean at selection time.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::mo::{Criterion, ReturnVector, UtilityFunction};

/// Default number of bootstrap replicates.
pub const DEFAULT_REPLICATES: usize = 50;

type Buf = SmallVec<[f64; 4]>;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDistribution {
    criterion: Criterion,
    width: usize,
    prior: f64,
    alpha: Vec<f64>,
    beta: Vec<u32>,
    updates: u64,
}

/// Iterator over fair coin flips, one bit of a 64-bit draw per flip.
pub struct CoinFlips<'a, R: ?Sized> {
    rng: &'a mut R,
    bits: u64,
    left: u32,
    remaining: usize,
}

impl<R: RngCore + ?Sized> Iterator for CoinFlips<'_, R> {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        if self.remaining == 0 {
            return None;
        }
        if self.left == 0 {
            self.bits = self.rng.next_u64();
            self.left = 64;
        }
        let heads = self.bits & 1 == 1;
        self.bits >>= 1;
        self.left -= 1;
        self.remaining -= 1;
        Some(heads)
    }
}

/// The `n` Bernoulli(1/2) draws an update consumes from `rng`.
pub fn coin_flips<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> CoinFlips<'_, R> {
    CoinFlips {
        rng,
        bits: 0,
        left: 0,
        remaining: n,
    }
}

impl BootstrapDistribution {
    /// `objectives` is ignored under ESR, where every replicate holds a scalar.
    pub fn new(replicates: usize, criterion: Criterion, objectives: usize, prior: f64) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::contract("bootstrap distribution needs at least one replicate"));
        }
        if objectives == 0 {
            return Err(Error::contract("bootstrap distribution needs at least one objective"));
        }
        if !(prior > 0.0 && prior.is_finite()) {
            return Err(Error::contract(format!("alpha prior must be positive, got {prior}")));
        }
        let width = match criterion {
            Criterion::Esr => 1,
            Criterion::Ser => objectives,
        };
        Ok(BootstrapDistribution {
            criterion,
            width,
            prior,
            alpha: vec![prior; replicates * width],
            beta: vec![1; replicates],
            updates: 0,
        })
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn replicates(&self) -> usize {
        self.beta.len()
    }

    /// Length of each replicate's alpha (1 under ESR).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    /// Number of observations offered to the distribution so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn alpha(&self, j: usize) -> &[f64] {
        &self.alpha[j * self.width..(j + 1) * self.width]
    }

    pub fn beta(&self, j: usize) -> u32 {
        self.beta[j]
    }

    fn check_observation(&self, observation: &[f64]) -> Result<()> {
        if observation.len() != self.width {
            return Err(Error::DimensionMismatch {
                expected: self.width,
                actual: observation.len(),
            });
        }
        Ok(())
    }

    /// Offers one observation; each replicate absorbs it on heads.
    pub fn update<R: RngCore + ?Sized>(&mut self, observation: &[f64], rng: &mut R) -> Result<()> {
        self.check_observation(observation)?;
        let j_count = self.replicates();
        self.absorb(observation, coin_flips(rng, j_count));
        Ok(())
    }

    /// As [`update`](Self::update), returning the coin flips used.
    pub fn update_traced<R: RngCore + ?Sized>(&mut self, observation: &[f64], rng: &mut R) -> Result<Vec<bool>> {
        self.check_observation(observation)?;
        let flips: Vec<bool> = coin_flips(rng, self.replicates()).collect();
        self.absorb(observation, flips.iter().copied());
        Ok(flips)
    }

    /// Applies an update with externally supplied coin flips, one per replicate.
    pub fn update_with_flips(&mut self, observation: &[f64], heads: &[bool]) -> Result<()> {
        self.check_observation(observation)?;
        if heads.len() != self.replicates() {
            return Err(Error::contract(format!(
                "expected {} coin flips, got {}",
                self.replicates(),
                heads.len()
            )));
        }
        self.absorb(observation, heads.iter().copied());
        Ok(())
    }

    fn absorb(&mut self, observation: &[f64], flips: impl Iterator<Item = bool>) {
        let w = self.width;
        for (j, heads) in flips.enumerate() {
            if heads {
                for (a, x) in self.alpha[j * w..(j + 1) * w].iter_mut().zip(observation) {
                    *a += *x;
                }
                self.beta[j] += 1;
            }
        }
        self.updates += 1;
    }

    /// `alpha_j / beta_j`, elementwise under SER.
    pub fn replicate_mean(&self, j: usize) -> Result<ReturnVector> {
        if j >= self.replicates() {
            return Err(Error::contract(format!(
                "replicate index {j} out of range (J = {})",
                self.replicates()
            )));
        }
        let b = self.beta[j] as f64;
        Ok(self.alpha(j).iter().map(|a| a / b).collect())
    }

    /// Pooled mean `sum_j alpha_j / sum_j beta_j`, ignoring the replicate split.
    pub fn pooled_mean(&self) -> ReturnVector {
        let total_beta: f64 = self.beta.iter().map(|&b| b as f64).sum();
        let mut sums: Buf = SmallVec::from_elem(0.0, self.width);
        for chunk in self.alpha.chunks_exact(self.width) {
            for (s, a) in sums.iter_mut().zip(chunk) {
                *s += *a;
            }
        }
        sums.iter().map(|s| s / total_beta).collect()
    }

    fn score_of(&self, mean: &[f64], utility: Option<&UtilityFunction>) -> Result<f64> {
        match (self.criterion, utility) {
            (Criterion::Esr, None) => Ok(mean[0]),
            (Criterion::Ser, Some(u)) => u.evaluate_slice(mean),
            (Criterion::Esr, Some(_)) => Err(Error::contract(
                "ESR distributions already hold utilities; no utility may be supplied",
            )),
            (Criterion::Ser, None) => Err(Error::contract("SER selection requires a utility function")),
        }
    }

    /// Selection score of replicate `j`: its mean (ESR) or the utility of
    /// its mean vector (SER).
    pub fn replicate_score(&self, j: usize, utility: Option<&UtilityFunction>) -> Result<f64> {
        let b = self.beta[j] as f64;
        let mean: Buf = self.alpha(j).iter().map(|a| a / b).collect();
        self.score_of(&mean, utility)
    }

    /// Score of the pooled mean, used for execution-time action choice.
    pub fn pooled_score(&self, utility: Option<&UtilityFunction>) -> Result<f64> {
        self.score_of(self.pooled_mean().as_slice(), utility)
    }

    /// JSON-friendly snapshot of the replicate arrays.
    pub fn snapshot(&self) -> DistributionSnapshot {
        DistributionSnapshot {
            mode: self.criterion,
            prior: self.prior,
            objectives: self.width,
            alpha: self.alpha.chunks_exact(self.width).map(|c| c.to_vec()).collect(),
            beta: self.beta.clone(),
            updates: self.updates,
        }
    }

    pub fn from_snapshot(s: DistributionSnapshot) -> Result<Self> {
        if s.beta.is_empty() || s.alpha.len() != s.beta.len() {
            return Err(Error::contract("snapshot needs matching, non-empty alpha and beta arrays"));
        }
        if s.mode == Criterion::Esr && s.objectives != 1 {
            return Err(Error::contract("ESR snapshots hold scalar replicates"));
        }
        if s.alpha.iter().any(|a| a.len() != s.objectives) {
            return Err(Error::contract("every alpha entry must have one value per objective"));
        }
        if s.beta.iter().any(|&b| b < 1) {
            return Err(Error::contract("beta counts start at 1"));
        }
        if !(s.prior > 0.0 && s.prior.is_finite()) {
            return Err(Error::contract("alpha prior must be positive"));
        }
        Ok(BootstrapDistribution {
            criterion: s.mode,
            width: s.objectives,
            prior: s.prior,
            alpha: s.alpha.into_iter().flatten().collect(),
            beta: s.beta,
            updates: s.updates,
        })
    }
}

/// Serialised form of a [`BootstrapDistribution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSnapshot {
    pub mode: Criterion,
    pub prior: f64,
    pub objectives: usize,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<u32>,
    pub updates: u64,
}

fn check_children(children: &[&BootstrapDistribution]) -> Result<()> {
    let first = children
        .first()
        .ok_or_else(|| Error::contract("cannot select among zero children"))?;
    if children
        .iter()
        .any(|c| c.criterion != first.criterion || c.width != first.width)
    {
        return Err(Error::contract("children mix criteria or objective counts"));
    }
    Ok(())
}

/// First index of the maximum; ties go to the lowest index.
fn argmax_first(scores: impl Iterator<Item = Result<f64>>) -> Result<usize> {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        let s = s?;
        if i == 0 || s > best.1 {
            best = (i, s);
        }
    }
    Ok(best.0)
}

/// Thompson step: one uniformly drawn replicate per child, then argmax.
pub fn thompson_select<R: Rng + ?Sized>(
    children: &[&BootstrapDistribution],
    utility: Option<&UtilityFunction>,
    rng: &mut R,
) -> Result<usize> {
    thompson_select_with(children, utility, |j_count| rng.gen_range(0..j_count))
}

/// [`thompson_select`] with the replicate draw supplied by the caller.
pub fn thompson_select_with(
    children: &[&BootstrapDistribution],
    utility: Option<&UtilityFunction>,
    mut draw: impl FnMut(usize) -> usize,
) -> Result<usize> {
    check_children(children)?;
    argmax_first(children.iter().map(|c| {
        let j = draw(c.replicates());
        if j >= c.replicates() {
            return Err(Error::contract(format!("replicate index {j} out of range")));
        }
        c.replicate_score(j, utility)
    }))
}

/// Execution-time choice: argmax of the pooled-mean scores.
pub fn greedy_select(children: &[&BootstrapDistribution], utility: Option<&UtilityFunction>) -> Result<usize> {
    check_children(children)?;
    argmax_first(children.iter().map(|c| c.pooled_score(utility)))
}
