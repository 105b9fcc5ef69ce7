//! Risk-aware investment MDP: each state is a stock, each action an amount
//! in euros to invest in it. The realised reward is the amount times the
//! stock's price move.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Enumerable, Outcome};
use crate::error::{Error, Result};
use crate::mo::{Environment, ReturnVector, StateKey, Step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stock {
    pub p_up: f64,
    /// Price multiplier on an up move.
    pub gain: f64,
    /// Price multiplier (magnitude) on a down move.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskMdpParams {
    pub horizon: usize,
    /// Investment amount of each action.
    pub investments: Vec<f64>,
    pub stocks: Vec<Stock>,
    /// Start stock; drawn uniformly when `null`.
    pub start: Option<usize>,
    pub transition: StockTransition,
}

/// Which stock the agent faces after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StockTransition {
    /// Drawn uniformly at random.
    #[default]
    Uniform,
    /// Stock `s` is followed by `s + 1`, wrapping around.
    Cycle,
}

/// Per-stock base prices of the shipped parameterisation.
pub const DEFAULT_BASE_PRICES: [f64; 7] = [0.05, 0.06, 0.07, 0.08, 0.09, 0.1, 0.11];

impl Default for RiskMdpParams {
    /// Seven fair coins whose up and down multipliers are both twice the
    /// stock's base price, invested in for ten steps, starting at stock 0
    /// and cycling through the stocks in order.
    fn default() -> Self {
        RiskMdpParams {
            horizon: 10,
            investments: vec![0.0, 1.0, 2.0, 3.0],
            stocks: DEFAULT_BASE_PRICES
                .iter()
                .map(|&base| Stock {
                    p_up: 0.5,
                    gain: 2.0 * base,
                    loss: 2.0 * base,
                })
                .collect(),
            start: Some(0),
            transition: StockTransition::Cycle,
        }
    }
}

impl RiskMdpParams {
    /// `(next stock, probability)` pairs after stock `s`.
    pub fn next_stocks(&self, s: usize) -> Vec<(usize, f64)> {
        let n = self.stocks.len();
        match self.transition {
            StockTransition::Uniform => (0..n).map(|k| (k, 1.0 / n as f64)).collect(),
            StockTransition::Cycle => vec![((s + 1) % n, 1.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("risk MDP horizon must be at least 1"));
        }
        if self.investments.is_empty() {
            return Err(Error::config("risk MDP needs at least one investment action"));
        }
        if self.investments[0] != 0.0 {
            return Err(Error::config("risk MDP action 0 must invest nothing"));
        }
        if self.stocks.is_empty() {
            return Err(Error::config("risk MDP needs at least one stock"));
        }
        for (i, s) in self.stocks.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.p_up) || s.gain < 0.0 || s.loss < 0.0 {
                return Err(Error::config(format!("risk MDP stock {i} is malformed")));
            }
        }
        if let Some(s) = self.start {
            if s >= self.stocks.len() {
                return Err(Error::config(format!("risk MDP start stock {s} does not exist")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskMdp {
    params: std::sync::Arc<RiskMdpParams>,
    stock: usize,
    t: usize,
}

impl RiskMdp {
    pub fn new(params: RiskMdpParams) -> Result<Self> {
        params.validate()?;
        Ok(RiskMdp {
            stock: params.start.unwrap_or(0),
            params: std::sync::Arc::new(params),
            t: 0,
        })
    }

    pub fn params(&self) -> &RiskMdpParams {
        &self.params
    }

    pub fn stock(&self) -> usize {
        self.stock
    }

    pub fn set_stock(&mut self, stock: usize) {
        self.stock = stock;
    }

    fn amount(&self, action: usize) -> Result<f64> {
        self.params.investments.get(action).copied().ok_or(Error::InvalidAction {
            action,
            available: self.params.investments.len(),
        })
    }
}

impl Environment for RiskMdp {
    fn objectives(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        self.params.investments.len()
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StateKey {
        self.t = 0;
        self.stock = match self.params.start {
            Some(s) => s,
            None => rng.gen_range(0..self.params.stocks.len()),
        };
        self.state()
    }

    fn state(&self) -> StateKey {
        self.stock as StateKey
    }

    fn timestep(&self) -> usize {
        self.t
    }

    fn is_terminal(&self) -> bool {
        self.t >= self.params.horizon
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Step> {
        if self.is_terminal() {
            return Err(Error::contract("risk MDP episode already terminated"));
        }
        let amount = self.amount(action)?;
        let stock = &self.params.stocks[self.stock];
        let multiplier = if rng.gen::<f64>() < stock.p_up {
            stock.gain
        } else {
            -stock.loss
        };
        self.stock = match self.params.transition {
            StockTransition::Uniform => rng.gen_range(0..self.params.stocks.len()),
            StockTransition::Cycle => (self.stock + 1) % self.params.stocks.len(),
        };
        self.t += 1;
        Ok(Step {
            state: self.state(),
            reward: ReturnVector::scalar(amount * multiplier),
            terminal: self.is_terminal(),
        })
    }
}

impl Enumerable for RiskMdp {
    fn outcomes(&self, action: usize) -> Result<Vec<Outcome<Self>>> {
        let amount = self.amount(action)?;
        let stock = &self.params.stocks[self.stock];
        let successors = self.params.next_stocks(self.stock);
        let mut out = Vec::with_capacity(2 * successors.len());
        for (p_move, m) in [(stock.p_up, stock.gain), (1.0 - stock.p_up, -stock.loss)] {
            for &(next_stock, p_next) in &successors {
                let mut next = self.clone();
                next.stock = next_stock;
                next.t += 1;
                out.push(Outcome {
                    probability: p_move * p_next,
                    reward: ReturnVector::scalar(amount * m),
                    next,
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn investing_nothing_never_pays_or_costs() {
        let mut env = RiskMdp::new(RiskMdpParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            env.reset(&mut rng);
            while !env.is_terminal() {
                assert_eq!(env.step(0, &mut rng).unwrap().reward[0], 0.0);
            }
        }
    }

    #[test]
    fn reward_is_amount_times_move() {
        let params = RiskMdpParams {
            stocks: vec![Stock {
                p_up: 1.0,
                gain: 2.0,
                loss: 2.0,
            }],
            start: Some(0),
            ..RiskMdpParams::default()
        };
        let mut env = RiskMdp::new(params).unwrap();
        let step = env.step(3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(step.reward[0], 6.0);
    }

    #[test]
    fn rejects_unknown_action() {
        let mut env = RiskMdp::new(RiskMdpParams::default()).unwrap();
        assert!(matches!(
            env.step(4, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::InvalidAction { action: 4, available: 4 })
        ));
    }

    #[test]
    fn default_has_seven_stocks_and_four_actions() {
        let p = RiskMdpParams::default();
        assert_eq!(p.stocks.len(), 7);
        assert_eq!(p.investments, vec![0.0, 1.0, 2.0, 3.0]);
        for (s, base) in p.stocks.iter().zip(DEFAULT_BASE_PRICES) {
            assert_eq!(s.gain, 2.0 * base);
            assert_eq!(s.loss, 2.0 * base);
        }
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        for transition in [StockTransition::Uniform, StockTransition::Cycle] {
            let params = RiskMdpParams {
                transition,
                ..RiskMdpParams::default()
            };
            let env = RiskMdp::new(params).unwrap();
            for a in 0..4 {
                let total: f64 = env.outcomes(a).unwrap().iter().map(|o| o.probability).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cycling_visits_stocks_in_order() {
        let params = RiskMdpParams {
            transition: StockTransition::Cycle,
            start: Some(5),
            ..RiskMdpParams::default()
        };
        let mut env = RiskMdp::new(params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        env.reset(&mut rng);
        let seen: Vec<u64> = (0..4).map(|_| env.step(2, &mut rng).unwrap().state).collect();
        assert_eq!(seen, vec![6, 0, 1, 2]);
    }
}
