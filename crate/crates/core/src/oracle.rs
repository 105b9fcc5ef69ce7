//! Exact reference values: exhaustive ESR expectimax over enumerable
//! environments, the Fishwood dynamic programme, exact risk-MDP values and
//! safe shortest paths on Deep Sea Treasure maps.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::envs::ddst::{Cell, DdstMap};
use crate::envs::fishwood::{Location, MOVE, STAY};
use crate::envs::{Enumerable, FishwoodParams, RiskMdpParams, StockTransition};
use crate::error::{Error, Result};
use crate::mo::{ReturnVector, UtilityFunction};

/// Default cap on expectimax nodes visited by [`esr_action_values`].
pub const DEFAULT_NODE_BUDGET: u64 = 20_000_000;

/// Optimal ESR value of every action at `env`'s current state given the
/// return accrued so far, by exhaustive expectimax over outcome sequences.
/// The optimal policy may depend on the whole history, as the planner's can.
pub fn esr_action_values<E: Enumerable>(
    env: &E,
    accrued: &ReturnVector,
    utility: &UtilityFunction,
    node_budget: u64,
) -> Result<Vec<f64>> {
    if env.is_terminal() {
        return Err(Error::contract("no actions at a terminal state"));
    }
    let mut visited = 0;
    (0..env.num_actions())
        .map(|a| action_value(env, a, accrued, utility, node_budget, &mut visited))
        .collect()
}

fn state_value<E: Enumerable>(
    env: &E,
    accrued: &ReturnVector,
    u: &UtilityFunction,
    budget: u64,
    visited: &mut u64,
) -> Result<f64> {
    *visited += 1;
    if *visited > budget {
        return Err(Error::contract(format!(
            "expectimax enumeration exceeds the bound of {budget} nodes"
        )));
    }
    if env.is_terminal() {
        return u.evaluate(accrued);
    }
    let mut best = f64::NEG_INFINITY;
    for a in 0..env.num_actions() {
        best = best.max(action_value(env, a, accrued, u, budget, visited)?);
    }
    Ok(best)
}

fn action_value<E: Enumerable>(
    env: &E,
    action: usize,
    accrued: &ReturnVector,
    u: &UtilityFunction,
    budget: u64,
    visited: &mut u64,
) -> Result<f64> {
    let mut q = 0.0;
    for o in env.outcomes(action)? {
        if o.probability == 0.0 {
            continue;
        }
        let next = accrued.checked_add(&o.reward)?;
        q += o.probability * state_value(&o.next, &next, u, budget, visited)?;
    }
    Ok(q)
}

/// Expected utility of a fixed action sequence rule `policy(t)`, enumerated
/// over every outcome sequence.
pub fn esr_policy_value<E: Enumerable>(
    env: &E,
    accrued: &ReturnVector,
    utility: &UtilityFunction,
    policy: &dyn Fn(&E) -> usize,
) -> Result<f64> {
    if env.is_terminal() {
        return utility.evaluate(accrued);
    }
    let mut v = 0.0;
    for o in env.outcomes(policy(env))? {
        if o.probability > 0.0 {
            v += o.probability * esr_policy_value(&o.next, &accrued.checked_add(&o.reward)?, utility, policy)?;
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FishwoodSolution {
    /// Optimal ESR value from the configured start.
    pub value: f64,
    /// `[stay, move]` action values at the start.
    pub action_values: [f64; 2],
}

/// Finite-horizon dynamic programme over `(t, location, fish, wood)` for
/// `u = min(fish, floor(wood / 2))`.
#[derive(Debug, Clone)]
pub struct FishwoodDp {
    params: FishwoodParams,
    /// `values[t][loc][fish][wood]`.
    values: Vec<[Vec<Vec<f64>>; 2]>,
}

fn loc_index(l: Location) -> usize {
    match l {
        Location::River => 0,
        Location::Woods => 1,
    }
}

impl FishwoodDp {
    pub fn solve(params: FishwoodParams) -> Result<Self> {
        params.validate()?;
        let h = params.horizon;
        let table = || vec![vec![0.0; h + 1]; h + 1];
        let mut values = vec![[table(), table()]; h + 1];
        for f in 0..=h {
            for w in 0..=h {
                let u = (f as f64).min((w / 2) as f64);
                values[h][0][f][w] = u;
                values[h][1][f][w] = u;
            }
        }
        let mut dp = FishwoodDp { params, values };
        for t in (0..h).rev() {
            for loc in [Location::River, Location::Woods] {
                for f in 0..=t {
                    for w in 0..=(t - f) {
                        let v = dp.q(t, loc, f, w, STAY).max(dp.q(t, loc, f, w, MOVE));
                        dp.values[t][loc_index(loc)][f][w] = v;
                    }
                }
            }
        }
        Ok(dp)
    }

    /// Value of taking `action` at time `t` in `loc` with the given catch.
    pub fn q(&self, t: usize, loc: Location, fish: usize, wood: usize, action: usize) -> f64 {
        let dest = if action == MOVE {
            match loc {
                Location::River => Location::Woods,
                Location::Woods => Location::River,
            }
        } else {
            loc
        };
        let next = &self.values[t + 1][loc_index(dest)];
        match dest {
            Location::River => {
                let p = self.params.p_fish;
                p * next[fish + 1][wood] + (1.0 - p) * next[fish][wood]
            }
            Location::Woods => {
                let p = self.params.p_wood;
                p * next[fish][wood + 1] + (1.0 - p) * next[fish][wood]
            }
        }
    }

    pub fn value(&self, t: usize, loc: Location, fish: usize, wood: usize) -> f64 {
        self.values[t][loc_index(loc)][fish][wood]
    }

    pub fn solution(&self) -> FishwoodSolution {
        let s = self.params.start;
        FishwoodSolution {
            value: self.value(0, s, 0, 0),
            action_values: [self.q(0, s, 0, 0, STAY), self.q(0, s, 0, 0, MOVE)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskSolution {
    /// Optimal `E[1 - exp(-R)]` from a uniformly drawn (or the fixed) start.
    pub optimal_value: f64,
    /// Optimal first action per start stock (lowest index among ties).
    pub optimal_first_actions: Vec<usize>,
    /// `E[1 - exp(-R)]` of always taking action `k`, per action.
    pub constant_policy_values: Vec<f64>,
}

/// Exact optimum of the risk MDP under `u = 1 - exp(-R)`.
///
/// `exp(-R)` factorises over steps, so maximising expected utility means
/// minimising `E[prod_t exp(-r_t)]`, which is a Markov problem over
/// `(stock, t)`.
pub fn risk_mdp_exact(params: &RiskMdpParams) -> Result<RiskSolution> {
    params.validate()?;
    let n = params.stocks.len();
    let factor = |s: usize, amount: f64| {
        let st = &params.stocks[s];
        st.p_up * (-amount * st.gain).exp() + (1.0 - st.p_up) * (amount * st.loss).exp()
    };
    // w[s] = min E[prod exp(-r)] from stock s with k steps left
    let mut w = vec![1.0; n];
    let mut first = vec![0; n];
    let mean_next = |w: &[f64], s: usize| match params.transition {
        StockTransition::Uniform => w.iter().sum::<f64>() / n as f64,
        StockTransition::Cycle => w[(s + 1) % n],
    };
    for _ in 0..params.horizon {
        let mut next = vec![0.0; n];
        for s in 0..n {
            let mut best = f64::INFINITY;
            for (a, &amount) in params.investments.iter().enumerate() {
                let v = factor(s, amount) * mean_next(&w, s);
                if v < best {
                    best = v;
                    first[s] = a;
                }
            }
            next[s] = best;
        }
        w = next;
    }
    let start_mean = |w: &[f64]| match params.start {
        Some(s) => w[s],
        None => w.iter().sum::<f64>() / n as f64,
    };
    let constant_policy_values = params
        .investments
        .iter()
        .map(|&amount| {
            let mut w = vec![1.0; n];
            for _ in 0..params.horizon {
                w = (0..n).map(|s| factor(s, amount) * mean_next(&w, s)).collect();
            }
            1.0 - start_mean(&w)
        })
        .collect();
    Ok(RiskSolution {
        optimal_value: 1.0 - start_mean(&w),
        optimal_first_actions: first,
        constant_policy_values,
    })
}

/// Exact return distribution of always investing `investments[action]`,
/// built by convolving per-step outcomes. Returns `(R, probability)` pairs
/// with `R` quantised to 1e-9.
pub fn risk_constant_policy_distribution(params: &RiskMdpParams, action: usize) -> Result<Vec<(f64, f64)>> {
    params.validate()?;
    let amount = *params.investments.get(action).ok_or(Error::InvalidAction {
        action,
        available: params.investments.len(),
    })?;
    let n = params.stocks.len();
    let key = |r: f64| (r * 1e9).round() as i64;
    // distribution over (current stock, return so far)
    let mut dist: HashMap<(usize, i64), f64> = HashMap::new();
    match params.start {
        Some(s) => {
            dist.insert((s, 0), 1.0);
        }
        None => {
            for s in 0..n {
                dist.insert((s, 0), 1.0 / n as f64);
            }
        }
    }
    for _ in 0..params.horizon {
        let mut next: HashMap<(usize, i64), f64> = HashMap::new();
        for (&(s, r), &p) in &dist {
            let st = &params.stocks[s];
            for (pm, m) in [(st.p_up, st.gain), (1.0 - st.p_up, -st.loss)] {
                let r2 = r + key(amount * m);
                for (s2, p2) in params.next_stocks(s) {
                    *next.entry((s2, r2)).or_insert(0.0) += p * pm * p2;
                }
            }
        }
        dist = next;
    }
    let mut by_return: HashMap<i64, f64> = HashMap::new();
    for ((_, r), p) in dist {
        *by_return.entry(r).or_insert(0.0) += p;
    }
    let mut out: Vec<(f64, f64)> = by_return.into_iter().map(|(r, p)| (r as f64 * 1e-9, p)).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreasureRoute {
    pub position: (usize, usize),
    pub value: f64,
    /// Steps on the shortest shark-free path, if one exists.
    pub safe_steps: Option<usize>,
    /// Return `[value, 0, -steps]` of that path.
    pub safe_return: Option<Vec<f64>>,
    pub utility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DdstSolution {
    pub routes: Vec<TreasureRoute>,
    /// Best utility among safe shortest paths that fit the horizon.
    pub best_utility: f64,
    /// Actions of the best safe path.
    pub best_path: Vec<usize>,
}

/// Breadth-first search over shark-free water from the start to every
/// treasure, scored with `utility`.
pub fn ddst_safe_paths(map: &DdstMap, utility: &UtilityFunction) -> Result<DdstSolution> {
    let (rows, cols) = (map.rows(), map.cols());
    let idx = |p: (usize, usize)| p.0 * cols + p.1;
    let mut parent: Vec<Option<((usize, usize), usize)>> = vec![None; rows * cols];
    let mut dist = vec![usize::MAX; rows * cols];
    let mut queue = VecDeque::new();
    dist[idx(map.start)] = 0;
    queue.push_back(map.start);
    while let Some(p) = queue.pop_front() {
        if matches!(map.cell(p), Cell::Treasure(_)) {
            continue;
        }
        for a in 0..4 {
            let q = map.destination(p, a)?;
            if q == p || dist[idx(q)] != usize::MAX || map.hit_probability(q) > 0.0 {
                continue;
            }
            dist[idx(q)] = dist[idx(p)] + 1;
            parent[idx(q)] = Some((p, a));
            queue.push_back(q);
        }
    }
    let mut routes = Vec::new();
    let mut best_utility = 0.0;
    let mut best_path = Vec::new();
    for (pos, value) in map.treasures() {
        let d = dist[idx(pos)];
        let reachable = d != usize::MAX && d <= map.horizon;
        let (safe_return, u) = if reachable {
            let r = vec![value, 0.0, -(d as f64)];
            let u = utility.evaluate_slice(&r)?;
            (Some(r), Some(u))
        } else {
            (None, None)
        };
        if let Some(u) = u {
            if u > best_utility {
                best_utility = u;
                let mut path = Vec::new();
                let mut at = pos;
                while let Some((prev, a)) = parent[idx(at)] {
                    path.push(a);
                    at = prev;
                }
                path.reverse();
                best_path = path;
            }
        }
        routes.push(TreasureRoute {
            position: pos,
            value,
            safe_steps: reachable.then_some(d),
            safe_return,
            utility: u,
        });
    }
    Ok(DdstSolution {
        routes,
        best_utility,
        best_path,
    })
}
