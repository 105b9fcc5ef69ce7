//! Renewable-energy dynamic economic emissions dispatch. Over a 24 hour
//! day an agent sets the output of one generator while a slack generator
//! balances demand and a wind turbine's output is uncertain during a storm.
//!
//! The network is treated as lossless. Generators other than the slack,
//! the agent's unit and the wind turbine follow a fixed schedule; unless
//! one is configured, every unit runs at the same fraction of its range
//! such that total nominal output meets demand.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Enumerable, Outcome};
use crate::error::{Error, Result};
use crate::mo::{Environment, ReturnVector, StateKey, Step};

const SAMPLE_PARAMS: &str = include_str!("../../assets/redeed-sample.json");

/// Previous-setting value observed in the first hour.
pub const NO_PREVIOUS: u64 = 63;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub p_min: f64,
    pub p_max: f64,
    /// Largest allowed change in output between consecutive hours (MW).
    pub ramp: f64,
    pub cost: CostCoefficients,
    pub emission: EmissionCoefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StormModel {
    /// First (0-based) hour of the storm; it lasts until the end of the day.
    pub start_hour: usize,
    pub multipliers: Vec<f64>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RedeedParams {
    pub generators: Vec<Generator>,
    /// Hourly demand (MW); its length is the horizon.
    pub demand: Vec<f64>,
    pub emission_scale: f64,
    pub penalty_weight: f64,
    /// 0-based generator indices.
    pub slack: usize,
    pub agent: usize,
    pub wind: usize,
    /// Number of evenly spaced output settings of the agent's generator.
    pub agent_levels: usize,
    pub storm: StormModel,
    /// Optional explicit `[hour][generator]` schedule for the fixed units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<Vec<f64>>>,
}

impl RedeedParams {
    /// The shipped ten-unit sample set.
    pub fn sample() -> Self {
        serde_json::from_str(SAMPLE_PARAMS).expect("shipped parameters parse")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let params: RedeedParams = serde_json::from_str(&text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.generators.len();
        if n == 0 || self.demand.is_empty() {
            return Err(Error::config("redeed needs generators and a demand profile"));
        }
        for (i, g) in self.generators.iter().enumerate() {
            if !(g.p_min >= 0.0 && g.p_min <= g.p_max && g.ramp > 0.0) {
                return Err(Error::config(format!("redeed generator {i} has malformed limits")));
            }
        }
        let roles = [self.slack, self.agent, self.wind];
        if roles.iter().any(|&r| r >= n) || self.slack == self.agent || self.slack == self.wind || self.agent == self.wind {
            return Err(Error::config("redeed slack, agent and wind must be distinct generators"));
        }
        if self.agent_levels < 2 || self.agent_levels as u64 >= NO_PREVIOUS {
            return Err(Error::config(format!("redeed agent_levels must lie in [2, {NO_PREVIOUS})")));
        }
        let s = &self.storm;
        let total: f64 = s.probabilities.iter().sum();
        if s.multipliers.is_empty()
            || s.multipliers.len() != s.probabilities.len()
            || (total - 1.0).abs() > 1e-9
            || s.probabilities.iter().any(|p| *p < 0.0)
        {
            return Err(Error::config("redeed storm multipliers and probabilities must pair up and sum to 1"));
        }
        if let Some(schedule) = &self.schedule {
            if schedule.len() != self.demand.len() || schedule.iter().any(|row| row.len() != n) {
                return Err(Error::config("redeed schedule must be hours x generators"));
            }
        }
        if !(self.penalty_weight > 0.0 && self.emission_scale >= 0.0) {
            return Err(Error::config("redeed penalty weight must be positive"));
        }
        Ok(())
    }

    /// Output of the agent's generator at setting `level`.
    pub fn agent_power(&self, level: usize) -> f64 {
        let g = &self.generators[self.agent];
        g.p_min + (g.p_max - g.p_min) * level as f64 / (self.agent_levels - 1) as f64
    }

    /// Nominal `[hour][generator]` output.
    pub fn nominal_schedule(&self) -> Vec<Vec<f64>> {
        if let Some(s) = &self.schedule {
            return s.clone();
        }
        let lo: f64 = self.generators.iter().map(|g| g.p_min).sum();
        let hi: f64 = self.generators.iter().map(|g| g.p_max).sum();
        self.demand
            .iter()
            .map(|d| {
                let lambda = ((d - lo) / (hi - lo)).clamp(0.0, 1.0);
                self.generators
                    .iter()
                    .map(|g| g.p_min + lambda * (g.p_max - g.p_min))
                    .collect()
            })
            .collect()
    }

    fn generator(&self, n: usize) -> Result<&Generator> {
        self.generators
            .get(n)
            .ok_or_else(|| Error::contract(format!("unknown generator {n}")))
    }
}

/// Local fuel cost of generator `n` producing `p` MW.
pub fn redeed_cost(params: &RedeedParams, n: usize, p: f64) -> Result<f64> {
    Ok(local_cost(params.generator(n)?, p))
}

/// Local emissions of generator `n` producing `p` MW; the wind turbine
/// emits nothing.
pub fn redeed_emissions(params: &RedeedParams, n: usize, p: f64) -> Result<f64> {
    let g = params.generator(n)?;
    if n == params.wind {
        return Ok(0.0);
    }
    Ok(local_emissions(g, params.emission_scale, p))
}

fn local_cost(g: &Generator, p: f64) -> f64 {
    let k = &g.cost;
    k.a + k.b * p + k.c * p * p + (k.d * (k.e * (g.p_min - p)).sin()).abs()
}

fn local_emissions(g: &Generator, scale: f64, p: f64) -> f64 {
    let k = &g.emission;
    scale * (k.alpha + k.beta * p + k.gamma * p * p + k.eta * (k.delta * p).exp())
}

/// A violated power or ramp limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub generator: usize,
    pub ramp: bool,
    /// Amount by which the limit is exceeded (MW).
    pub magnitude: f64,
}

/// Power and ramp violations of every dispatchable generator. The wind
/// turbine's output is exogenous and never checked.
pub fn redeed_violations(params: &RedeedParams, powers: &[f64], previous: Option<&[f64]>) -> Vec<Violation> {
    let mut out = Vec::new();
    for (n, g) in params.generators.iter().enumerate() {
        if n == params.wind {
            continue;
        }
        let p = powers[n];
        let over = (p - g.p_max).max(g.p_min - p);
        if over > 0.0 {
            out.push(Violation {
                generator: n,
                ramp: false,
                magnitude: over,
            });
        }
        if let Some(prev) = previous {
            let over = (p - prev[n]).abs() - g.ramp;
            if over > 0.0 {
                out.push(Violation {
                    generator: n,
                    ramp: true,
                    magnitude: over,
                });
            }
        }
    }
    out
}

/// Hourly `[cost, emissions, penalty]` magnitudes for a full dispatch.
/// `previous` is the prior hour's dispatch, absent in the first hour.
pub fn redeed_globals(params: &RedeedParams, powers: &[f64], previous: Option<&[f64]>) -> Result<ReturnVector> {
    let n = params.generators.len();
    if powers.len() != n || previous.is_some_and(|p| p.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if powers.len() != n { powers.len() } else { previous.map_or(0, |p| p.len()) },
        });
    }
    let mut cost = 0.0;
    let mut emissions = 0.0;
    for (i, &p) in powers.iter().enumerate() {
        cost += redeed_cost(params, i, p)?;
        emissions += redeed_emissions(params, i, p)?;
    }
    let penalty: f64 = redeed_violations(params, powers, previous)
        .iter()
        .map(|v| params.penalty_weight * (v.magnitude + 1.0).abs())
        .sum();
    Ok(ReturnVector::from([cost, emissions, penalty]))
}

/// Observed state is `(hour, previous agent setting)`. Rewards are the
/// negated hourly `[cost, emissions, penalty]`.
#[derive(Debug, Clone)]
pub struct Redeed {
    params: Arc<RedeedParams>,
    schedule: Arc<Vec<Vec<f64>>>,
    hour: usize,
    previous_level: Option<usize>,
    previous_dispatch: Vec<f64>,
}

impl Redeed {
    pub fn new(params: RedeedParams) -> Result<Self> {
        params.validate()?;
        let schedule = params.nominal_schedule();
        Ok(Redeed {
            previous_dispatch: Vec::with_capacity(params.generators.len()),
            params: Arc::new(params),
            schedule: Arc::new(schedule),
            hour: 0,
            previous_level: None,
        })
    }

    pub fn params(&self) -> &RedeedParams {
        &self.params
    }

    pub fn hour(&self) -> usize {
        self.hour
    }

    /// Dispatch for the current hour given the agent's setting and the
    /// wind multiplier; the slack unit covers the remaining demand.
    pub fn dispatch(&self, level: usize, wind_multiplier: f64) -> Vec<f64> {
        let p = &self.params;
        let mut powers = self.schedule[self.hour].clone();
        powers[p.agent] = p.agent_power(level);
        powers[p.wind] *= wind_multiplier;
        let others: f64 = powers
            .iter()
            .enumerate()
            .filter(|(n, _)| *n != p.slack)
            .map(|(_, v)| v)
            .sum();
        powers[p.slack] = p.demand[self.hour] - others;
        powers
    }

    fn check_level(&self, action: usize) -> Result<()> {
        if action >= self.params.agent_levels {
            return Err(Error::InvalidAction {
                action,
                available: self.params.agent_levels,
            });
        }
        Ok(())
    }

    fn in_storm(&self) -> bool {
        self.hour >= self.params.storm.start_hour
    }

    fn apply(&mut self, level: usize, wind_multiplier: f64) -> ReturnVector {
        let powers = self.dispatch(level, wind_multiplier);
        let previous = (!self.previous_dispatch.is_empty()).then_some(self.previous_dispatch.as_slice());
        let globals = redeed_globals(&self.params, &powers, previous).expect("dispatch has one entry per generator");
        self.previous_dispatch = powers;
        self.previous_level = Some(level);
        self.hour += 1;
        globals.scaled(-1.0)
    }
}

impl Environment for Redeed {
    fn objectives(&self) -> usize {
        3
    }

    fn num_actions(&self) -> usize {
        self.params.agent_levels
    }

    fn horizon(&self) -> usize {
        self.params.demand.len()
    }

    fn reset<R: Rng + ?Sized>(&mut self, _rng: &mut R) -> StateKey {
        self.hour = 0;
        self.previous_level = None;
        self.previous_dispatch.clear();
        self.state()
    }

    fn state(&self) -> StateKey {
        let prev = self.previous_level.map_or(NO_PREVIOUS, |l| l as u64);
        ((self.hour as u64) << 6) | prev
    }

    fn timestep(&self) -> usize {
        self.hour
    }

    fn is_terminal(&self) -> bool {
        self.hour >= self.params.demand.len()
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Step> {
        if self.is_terminal() {
            return Err(Error::contract("redeed day already over"));
        }
        self.check_level(action)?;
        let multiplier = if self.in_storm() {
            let storm = &self.params.storm;
            let mut x = rng.gen::<f64>();
            let mut pick = storm.multipliers[storm.multipliers.len() - 1];
            for (m, p) in storm.multipliers.iter().zip(&storm.probabilities) {
                if x < *p {
                    pick = *m;
                    break;
                }
                x -= p;
            }
            pick
        } else {
            1.0
        };
        let reward = self.apply(action, multiplier);
        Ok(Step {
            state: self.state(),
            reward,
            terminal: self.is_terminal(),
        })
    }
}

impl Enumerable for Redeed {
    fn outcomes(&self, action: usize) -> Result<Vec<Outcome<Self>>> {
        self.check_level(action)?;
        let cases: Vec<(f64, f64)> = if self.in_storm() {
            let s = &self.params.storm;
            s.probabilities.iter().copied().zip(s.multipliers.iter().copied()).collect()
        } else {
            vec![(1.0, 1.0)]
        };
        Ok(cases
            .into_iter()
            .map(|(probability, m)| {
                let mut next = self.clone();
                let reward = next.apply(action, m);
                Outcome {
                    probability,
                    reward,
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

    fn unit(cost: CostCoefficients, emission: EmissionCoefficients) -> Generator {
        Generator {
            p_min: 50.0,
            p_max: 200.0,
            ramp: 40.0,
            cost,
            emission,
        }
    }

    fn toy() -> RedeedParams {
        let cost = CostCoefficients {
            a: 10.0,
            b: 2.0,
            c: 0.01,
            d: 0.0,
            e: 0.0,
        };
        let emission = EmissionCoefficients {
            alpha: 5.0,
            beta: 1.0,
            gamma: 0.001,
            eta: 0.5,
            delta: 0.01,
        };
        RedeedParams {
            generators: vec![unit(cost, emission); 4],
            demand: vec![400.0; 3],
            emission_scale: 1.0,
            penalty_weight: 1e6,
            slack: 0,
            agent: 1,
            wind: 2,
            agent_levels: 4,
            storm: StormModel {
                start_hour: 1,
                multipliers: vec![0.75, 1.0, 1.25],
                probabilities: vec![0.15, 0.7, 0.15],
            },
            schedule: None,
        }
    }

    #[test]
    fn cost_example() {
        let p = toy();
        assert_eq!(redeed_cost(&p, 0, 100.0).unwrap(), 310.0);
        assert!(redeed_cost(&p, 9, 100.0).is_err());
    }

    #[test]
    fn valve_term_vanishes_at_minimum_output() {
        let mut p = toy();
        p.generators[0].cost.d = 123.0;
        p.generators[0].cost.e = 0.7;
        let quad = 10.0 + 2.0 * 50.0 + 0.01 * 2500.0;
        assert_eq!(redeed_cost(&p, 0, 50.0).unwrap(), quad);
    }

    #[test]
    fn emission_example_and_wind_is_clean() {
        let p = toy();
        let e = redeed_emissions(&p, 0, 100.0).unwrap();
        assert!((e - (115.0 + 0.5 * 1f64.exp())).abs() < 1e-12);
        assert!((e - 116.359).abs() < 1e-3);
        assert_eq!(redeed_emissions(&p, 2, 100.0).unwrap(), 0.0);
    }

    #[test]
    fn single_power_violation_penalty() {
        let p = toy();
        let g = redeed_globals(&p, &[210.0, 100.0, 100.0, 100.0], None).unwrap();
        assert_eq!(g[2], 1e6 * 11.0);
        let g = redeed_globals(&p, &[100.0, 100.0, 100.0, 100.0], None).unwrap();
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn ramp_violation_is_penalised() {
        let p = toy();
        let prev = [100.0, 100.0, 100.0, 100.0];
        let g = redeed_globals(&p, &[100.0, 150.0, 100.0, 100.0], Some(&prev)).unwrap();
        assert_eq!(g[2], 1e6 * 11.0);
    }

    #[test]
    fn slack_balances_demand() {
        let env = Redeed::new(RedeedParams::sample()).unwrap();
        for level in 0..11 {
            let powers = env.dispatch(level, 1.25);
            let total: f64 = powers.iter().sum();
            assert!((total - env.params().demand[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn sample_nominal_schedule_respects_fixed_unit_limits() {
        let p = RedeedParams::sample();
        let s = p.nominal_schedule();
        for (m, row) in s.iter().enumerate() {
            assert!((row.iter().sum::<f64>() - p.demand[m]).abs() < 1e-9);
            let prev = (m > 0).then(|| s[m - 1].as_slice());
            assert!(redeed_violations(&p, row, prev).is_empty(), "hour {m}");
        }
    }

    #[test]
    fn state_encodes_hour_and_previous_setting() {
        let mut env = Redeed::new(RedeedParams::sample()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(env.reset(&mut rng), NO_PREVIOUS);
        env.step(4, &mut rng).unwrap();
        assert_eq!(env.state(), (1 << 6) | 4);
    }

    #[test]
    fn pre_storm_hours_are_deterministic() {
        let env = Redeed::new(RedeedParams::sample()).unwrap();
        assert_eq!(env.outcomes(5).unwrap().len(), 1);
        let mut a = env.clone();
        let mut b = env.clone();
        let ra = a.step(5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let rb = b.step(5, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(ra, rb);
    }
}
