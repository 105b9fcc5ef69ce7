//! A single environment type covering every configured domain.

use rand::Rng;

use super::config::{ExperimentConfig, UtilityApplication};
use crate::envs::{DangerousDst, Enumerable, Fishwood, Outcome, PerStepUtility, Redeed, RiskMdp};
use crate::error::Result;
use crate::mo::{Environment, StateKey, Step, UtilityFunction};

#[derive(Debug, Clone)]
pub enum AnyEnv {
    Risk(RiskMdp),
    Fishwood(Fishwood),
    Redeed(Redeed),
    Ddst(DangerousDst),
    PerStep(Box<PerStepUtility<AnyEnv>>),
}

macro_rules! each {
    ($self:expr, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::Risk($e) => $body,
            AnyEnv::Fishwood($e) => $body,
            AnyEnv::Redeed($e) => $body,
            AnyEnv::Ddst($e) => $body,
            AnyEnv::PerStep($e) => $body,
        }
    };
}

impl AnyEnv {
    /// The raw domain environment described by `cfg`.
    pub fn base(cfg: &ExperimentConfig) -> Result<Self> {
        use super::config::DomainConfig as D;
        Ok(match &cfg.domain {
            D::RiskMdp { .. } => AnyEnv::Risk(RiskMdp::new(cfg.domain.risk_params()?)?),
            D::Fishwood { params } => AnyEnv::Fishwood(Fishwood::new(*params)?),
            D::Redeed { .. } => AnyEnv::Redeed(Redeed::new(cfg.domain.redeed_params()?)?),
            D::Ddst { .. } => AnyEnv::Ddst(DangerousDst::new(cfg.domain.ddst_map()?)),
        })
    }

    /// The environment the agents interact with and the utility that
    /// scores its episodes.
    pub fn build(cfg: &ExperimentConfig) -> Result<(Self, UtilityFunction)> {
        let base = Self::base(cfg)?;
        Ok(match cfg.utility_application {
            UtilityApplication::Cumulative => (base, cfg.utility.clone()),
            UtilityApplication::PerStep => (
                AnyEnv::PerStep(Box::new(PerStepUtility::new(base, cfg.utility.clone()))),
                UtilityFunction::linear(vec![1.0])?,
            ),
        })
    }
}

impl Environment for AnyEnv {
    fn objectives(&self) -> usize {
        each!(self, e => e.objectives())
    }

    fn num_actions(&self) -> usize {
        each!(self, e => e.num_actions())
    }

    fn horizon(&self) -> usize {
        each!(self, e => e.horizon())
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StateKey {
        each!(self, e => e.reset(rng))
    }

    fn state(&self) -> StateKey {
        each!(self, e => e.state())
    }

    fn timestep(&self) -> usize {
        each!(self, e => e.timestep())
    }

    fn is_terminal(&self) -> bool {
        each!(self, e => e.is_terminal())
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Step> {
        each!(self, e => e.step(action, rng))
    }
}

impl Enumerable for AnyEnv {
    fn outcomes(&self, action: usize) -> Result<Vec<Outcome<Self>>> {
        fn wrap<E>(v: Vec<Outcome<E>>, f: impl Fn(E) -> AnyEnv) -> Vec<Outcome<AnyEnv>> {
            v.into_iter()
                .map(|o| Outcome {
                    probability: o.probability,
                    reward: o.reward,
                    next: f(o.next),
                })
                .collect()
        }
        Ok(match self {
            AnyEnv::Risk(e) => wrap(e.outcomes(action)?, AnyEnv::Risk),
            AnyEnv::Fishwood(e) => wrap(e.outcomes(action)?, AnyEnv::Fishwood),
            AnyEnv::Redeed(e) => wrap(e.outcomes(action)?, AnyEnv::Redeed),
            AnyEnv::Ddst(e) => wrap(e.outcomes(action)?, AnyEnv::Ddst),
            AnyEnv::PerStep(e) => wrap(e.outcomes(action)?, |n| AnyEnv::PerStep(Box::new(n))),
        })
    }
}
