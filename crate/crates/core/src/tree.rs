//! Distributional Monte Carlo tree search.
//!
//! The search tree alternates decision nodes (the agent picks an action) and
//! chance nodes (the environment samples an outcome). Every chance node owns a
//! [`BootstrapDistribution`] over the utility of full-episode returns (ESR) or
//! over the full-episode return vectors themselves (SER). Each learning
//! iteration descends the tree with bootstrap Thompson sampling, adds at most
//! one new decision node, finishes the episode with a uniform-random rollout
//! and then feeds the cumulative return `accrued + in-tree + rollout` to every
//! chance node on the path.
//!
//! Nodes live in two arenas addressed by `u32` ids so the tree can be kept
//! across execution steps and episodes.

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::bts::{greedy_select, thompson_select, BootstrapDistribution, DEFAULT_REPLICATES};
use crate::error::{Error, Result};
use crate::mo::{Criterion, Environment, ReturnVector, StateKey, Step, UtilityFunction};

pub type NodeId = u32;
type ChanceId = u32;

/// How much of the tree survives between planning calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeReuse {
    /// One tree for the whole run; episodes restart at the root for their start state.
    #[default]
    Persistent,
    /// Rebuilt at the start of every episode, reused across its steps.
    Episode,
    /// Rebuilt before every execution step.
    Step,
}

/// Exploration by replacing rollout returns with random vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtificialReturns {
    pub probability: f64,
    /// Inclusive `[min, max]` per objective.
    pub bounds: Vec<(f64, f64)>,
}

impl ArtificialReturns {
    pub fn validate(&self, objectives: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::config(format!(
                "artificial return probability must lie in [0, 1], got {}",
                self.probability
            )));
        }
        if self.bounds.len() != objectives {
            return Err(Error::DimensionMismatch {
                expected: objectives,
                actual: self.bounds.len(),
            });
        }
        for (o, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::config(format!(
                    "artificial return bounds for objective {o} are malformed: [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// With probability `cfg.probability`, replaces a rollout return by a vector
/// drawn uniformly from the configured box; otherwise returns it unchanged.
pub fn inject_artificial_return<R: Rng + ?Sized>(
    rollout: &ReturnVector,
    cfg: &ArtificialReturns,
    rng: &mut R,
) -> Result<(ReturnVector, bool)> {
    cfg.validate(rollout.len())?;
    if cfg.probability <= 0.0 || !rng.gen_bool(cfg.probability) {
        return Ok((rollout.clone(), false));
    }
    let drawn = cfg
        .bounds
        .iter()
        .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
        .collect();
    Ok((drawn, true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub criterion: Criterion,
    pub replicates: usize,
    pub alpha_prior: f64,
    pub iterations_per_step: usize,
    #[serde(default)]
    pub artificial_returns: Option<ArtificialReturns>,
}

impl PlannerConfig {
    pub fn new(criterion: Criterion, iterations_per_step: usize) -> Self {
        PlannerConfig {
            criterion,
            replicates: DEFAULT_REPLICATES,
            alpha_prior: 1.0,
            iterations_per_step,
            artificial_returns: None,
        }
    }

    pub fn validate(&self, objectives: usize) -> Result<()> {
        if self.iterations_per_step == 0 {
            return Err(Error::config("iterations per step must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        if !(self.alpha_prior > 0.0 && self.alpha_prior.is_finite()) {
            return Err(Error::config("alpha prior must be positive"));
        }
        if let Some(a) = &self.artificial_returns {
            a.validate(objectives)?;
        }
        Ok(())
    }
}

/// Children of a chance node are keyed by the observed next state and the
/// reward quantised to 9 decimals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OutcomeKey {
    state: StateKey,
    reward: SmallVec<[u64; 4]>,
}

impl OutcomeKey {
    pub fn new(state: StateKey, reward: &ReturnVector) -> Self {
        let reward = reward
            .iter()
            .map(|&x| {
                let q = (x * 1e9).round();
                if q == 0.0 {
                    0
                } else {
                    q.to_bits()
                }
            })
            .collect();
        OutcomeKey { state, reward }
    }

    pub fn of(step: &Step) -> Self {
        Self::new(step.state, &step.reward)
    }
}

#[derive(Debug, Clone)]
struct DecisionNode {
    state: StateKey,
    reward: ReturnVector,
    terminal: bool,
    visits: u64,
    expanded: SmallVec<[(u32, ChanceId); 4]>,
}

#[derive(Debug, Clone)]
struct ChanceNode {
    action: u32,
    dist: BootstrapDistribution,
    /// Outcome key, child node, and how often learning iterations descended into it.
    children: SmallVec<[(OutcomeKey, NodeId, u64); 2]>,
    visits: u64,
}

/// What one backup fed to the chance nodes on its path.
#[derive(Debug, Clone, PartialEq)]
pub struct BackupRecord {
    pub accrued: ReturnVector,
    pub in_tree: ReturnVector,
    pub rollout: ReturnVector,
    pub artificial: bool,
    /// Whether the simulated episode reached a terminal state.
    pub complete: bool,
    /// Vector the utility was applied to (ESR) or that was absorbed (SER).
    pub backed_up: ReturnVector,
    pub observation: Vec<f64>,
    pub path_len: usize,
}

/// Per-action summary at a decision node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChildSummary {
    pub action: usize,
    pub visits: u64,
    pub outcomes: usize,
    pub pooled_mean: ReturnVector,
    /// Pooled mean under ESR, utility of the pooled mean under SER.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeStats {
    pub decision_nodes: usize,
    pub chance_nodes: usize,
    pub iterations: u64,
    /// Decision nodes per depth below the inspected root.
    pub depth_histogram: Vec<usize>,
    pub root_children: Vec<ChildSummary>,
}

/// The DMCTS planner: a tree plus the configuration used to grow it.
#[derive(Debug, Clone)]
pub struct Planner {
    cfg: PlannerConfig,
    utility: UtilityFunction,
    objectives: usize,
    decisions: Vec<DecisionNode>,
    chances: Vec<ChanceNode>,
    roots: Vec<(StateKey, NodeId)>,
    iterations: u64,
    backups: Option<Vec<BackupRecord>>,
}

impl Planner {
    pub fn new(cfg: PlannerConfig, utility: UtilityFunction, objectives: usize) -> Result<Self> {
        cfg.validate(objectives)?;
        if utility.objectives() != objectives {
            return Err(Error::DimensionMismatch {
                expected: objectives,
                actual: utility.objectives(),
            });
        }
        Ok(Planner {
            cfg,
            utility,
            objectives,
            decisions: Vec::new(),
            chances: Vec::new(),
            roots: Vec::new(),
            iterations: 0,
            backups: None,
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn utility(&self) -> &UtilityFunction {
        &self.utility
    }

    /// Drops every node.
    pub fn clear(&mut self) {
        self.decisions.clear();
        self.chances.clear();
        self.roots.clear();
    }

    /// Starts recording every backup; see [`take_backups`](Self::take_backups).
    pub fn record_backups(&mut self, on: bool) {
        self.backups = if on { Some(Vec::new()) } else { None };
    }

    pub fn take_backups(&mut self) -> Vec<BackupRecord> {
        self.backups.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn decision_count(&self) -> usize {
        self.decisions.len()
    }

    pub fn chance_count(&self) -> usize {
        self.chances.len()
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    fn push_decision(&mut self, state: StateKey, reward: ReturnVector, terminal: bool) -> NodeId {
        let id = self.decisions.len() as NodeId;
        self.decisions.push(DecisionNode {
            state,
            reward,
            terminal,
            visits: 0,
            expanded: SmallVec::new(),
        });
        id
    }

    /// Root node for an episode starting in `state`, shared by every episode
    /// with the same start state.
    pub fn episode_root(&mut self, state: StateKey) -> NodeId {
        if let Some(&(_, id)) = self.roots.iter().find(|(s, _)| *s == state) {
            return id;
        }
        let id = self.push_decision(state, ReturnVector::zeros(self.objectives), false);
        self.roots.push((state, id));
        id
    }

    fn expand<E: Environment, R: Rng + ?Sized>(&mut self, node: NodeId, env: &E, rng: &mut R) -> Result<Option<ChanceId>> {
        let n_actions = env.num_actions();
        let d = &self.decisions[node as usize];
        if d.expanded.len() >= n_actions {
            return Ok(None);
        }
        let untried: SmallVec<[u32; 16]> = (0..n_actions as u32)
            .filter(|a| !d.expanded.iter().any(|(b, _)| b == a))
            .collect();
        let action = untried[rng.gen_range(0..untried.len())];
        Ok(Some(self.add_chance(node, action)?))
    }

    fn add_chance(&mut self, node: NodeId, action: u32) -> Result<ChanceId> {
        let dist = BootstrapDistribution::new(
            self.cfg.replicates,
            self.cfg.criterion,
            self.objectives,
            self.cfg.alpha_prior,
        )?;
        let id = self.chances.len() as ChanceId;
        self.chances.push(ChanceNode {
            action,
            dist,
            children: SmallVec::new(),
            visits: 0,
        });
        self.decisions[node as usize].expanded.push((action, id));
        Ok(id)
    }

    fn selection_utility(&self) -> Option<&UtilityFunction> {
        match self.cfg.criterion {
            Criterion::Esr => None,
            Criterion::Ser => Some(&self.utility),
        }
    }

    fn thompson<R: Rng + ?Sized>(&self, node: NodeId, rng: &mut R) -> Result<ChanceId> {
        let d = &self.decisions[node as usize];
        let dists: SmallVec<[&BootstrapDistribution; 16]> =
            d.expanded.iter().map(|&(_, c)| &self.chances[c as usize].dist).collect();
        let i = thompson_select(&dists, self.selection_utility(), rng)?;
        Ok(d.expanded[i].1)
    }

    /// Index of the child of `chance` for an observed outcome, creating it
    /// when unseen.
    fn child_for(&mut self, chance: ChanceId, step: &Step) -> (usize, bool) {
        let key = OutcomeKey::of(step);
        let children = &self.chances[chance as usize].children;
        if let Some(i) = children.iter().position(|(k, _, _)| *k == key) {
            return (i, false);
        }
        let id = self.push_decision(step.state, step.reward.clone(), step.terminal);
        let children = &mut self.chances[chance as usize].children;
        children.push((key, id, 0));
        (children.len() - 1, true)
    }

    /// One select / expand / simulate / backpropagate pass from `root`.
    ///
    /// `env` must be positioned at `root`'s state and `accrued` is the return
    /// the live episode has collected so far.
    pub fn learning_iteration<E: Environment, R: Rng + ?Sized>(
        &mut self,
        root: NodeId,
        env: &E,
        accrued: &ReturnVector,
        rng: &mut R,
    ) -> Result<()> {
        if accrued.len() != self.objectives {
            return Err(Error::DimensionMismatch {
                expected: self.objectives,
                actual: accrued.len(),
            });
        }
        let mut sim = env.clone();
        let mut node = root;
        let mut path: SmallVec<[ChanceId; 32]> = SmallVec::new();
        let mut in_tree = ReturnVector::zeros(self.objectives);
        self.decisions[node as usize].visits += 1;

        // selection and expansion
        while !sim.is_terminal() {
            let chance = match self.expand(node, &sim, rng)? {
                Some(c) => c,
                None => self.thompson(node, rng)?,
            };
            let action = self.chances[chance as usize].action as usize;
            let step = sim.step(action, rng)?;
            in_tree.add_assign_checked(&step.reward)?;
            path.push(chance);
            let (slot, created) = self.child_for(chance, &step);
            let entry = &mut self.chances[chance as usize].children[slot];
            entry.2 += 1;
            let child = entry.1;
            self.decisions[child as usize].visits += 1;
            node = child;
            if created {
                break;
            }
        }

        // simulation
        let mut rollout = ReturnVector::zeros(self.objectives);
        let rolled = !sim.is_terminal();
        while !sim.is_terminal() {
            let action = rng.gen_range(0..sim.num_actions());
            let step = sim.step(action, rng)?;
            rollout.add_assign_checked(&step.reward)?;
        }
        let mut artificial = false;
        if rolled {
            if let Some(cfg) = &self.cfg.artificial_returns {
                let (r, injected) = inject_artificial_return(&rollout, cfg, rng)?;
                rollout = r;
                artificial = injected;
            }
        }

        // backpropagation: every node on the path shares the same cumulative
        // return, its own accrued prefix plus its own future.
        let mut total = accrued.checked_add(&in_tree)?;
        total.add_assign_checked(&rollout)?;
        let observation: SmallVec<[f64; 4]> = match self.cfg.criterion {
            Criterion::Esr => SmallVec::from_slice(&[self.utility.evaluate(&total)?]),
            Criterion::Ser => SmallVec::from_slice(total.as_slice()),
        };
        for &c in &path {
            let chance = &mut self.chances[c as usize];
            chance.dist.update(&observation, rng)?;
            chance.visits += 1;
        }
        if let Some(log) = self.backups.as_mut() {
            log.push(BackupRecord {
                accrued: accrued.clone(),
                in_tree,
                rollout,
                artificial,
                complete: sim.is_terminal(),
                backed_up: total,
                observation: observation.to_vec(),
                path_len: path.len(),
            });
        }
        self.iterations += 1;
        Ok(())
    }

    /// Runs the configured number of learning iterations from `root` and
    /// returns the execution-time action: the expanded child with the best
    /// pooled mean (ESR) or best utility of pooled mean (SER).
    pub fn plan_step<E: Environment, R: Rng + ?Sized>(
        &mut self,
        root: NodeId,
        env: &E,
        accrued: &ReturnVector,
        rng: &mut R,
    ) -> Result<usize> {
        if env.is_terminal() || self.decisions[root as usize].terminal {
            return Err(Error::contract("cannot plan from a terminal state"));
        }
        if env.state() != self.decisions[root as usize].state {
            return Err(Error::contract("planning root does not match the environment state"));
        }
        for _ in 0..self.cfg.iterations_per_step {
            self.learning_iteration(root, env, accrued, rng)?;
        }
        self.greedy_action(root)
    }

    /// Execution-time action at `node` from the statistics gathered so far.
    pub fn greedy_action(&self, node: NodeId) -> Result<usize> {
        let d = &self.decisions[node as usize];
        let dists: SmallVec<[&BootstrapDistribution; 16]> =
            d.expanded.iter().map(|&(_, c)| &self.chances[c as usize].dist).collect();
        let i = greedy_select(&dists, self.selection_utility())?;
        Ok(d.expanded[i].0 as usize)
    }

    /// Moves the planning root to the child reached by a real transition,
    /// creating it when the real outcome was never simulated.
    pub fn advance_root(&mut self, root: NodeId, action: usize, observed: &Step) -> Result<NodeId> {
        let chance = self.decisions[root as usize]
            .expanded
            .iter()
            .find(|(a, _)| *a as usize == action)
            .map(|&(_, c)| c)
            .ok_or_else(|| Error::contract(format!("action {action} was never expanded at this node")))?;
        let (slot, _) = self.child_for(chance, observed);
        Ok(self.chances[chance as usize].children[slot].1)
    }

    pub fn node_state(&self, node: NodeId) -> StateKey {
        self.decisions[node as usize].state
    }

    pub fn node_visits(&self, node: NodeId) -> u64 {
        self.decisions[node as usize].visits
    }

    pub fn node_reward(&self, node: NodeId) -> &ReturnVector {
        &self.decisions[node as usize].reward
    }

    /// Summaries of the expanded children of `node`, in expansion order.
    pub fn children(&self, node: NodeId) -> Vec<ChildSummary> {
        let u = self.selection_utility();
        self.decisions[node as usize]
            .expanded
            .iter()
            .map(|&(a, c)| {
                let ch = &self.chances[c as usize];
                ChildSummary {
                    action: a as usize,
                    visits: ch.visits,
                    outcomes: ch.children.len(),
                    pooled_mean: ch.dist.pooled_mean(),
                    score: ch.dist.pooled_score(u).unwrap_or(f64::NAN),
                }
            })
            .collect()
    }

    /// Decision-node children of the chance node for `action` at `node`.
    pub fn outcome_children(&self, node: NodeId, action: usize) -> Vec<NodeId> {
        self.decisions[node as usize]
            .expanded
            .iter()
            .find(|(a, _)| *a as usize == action)
            .map(|&(_, c)| self.chances[c as usize].children.iter().map(|(_, id, _)| *id).collect())
            .unwrap_or_default()
    }

    pub fn chance_distribution(&self, node: NodeId, action: usize) -> Option<&BootstrapDistribution> {
        self.decisions[node as usize]
            .expanded
            .iter()
            .find(|(a, _)| *a as usize == action)
            .map(|&(_, c)| &self.chances[c as usize].dist)
    }

    /// Checks the structural invariants of the subtree under `root`: unique
    /// outcome keys, one distribution update per chance visit, and chance
    /// visits equal to the number of descents into their children.
    pub fn check_invariants(&self, root: NodeId) -> Result<()> {
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            for &(_, c) in &self.decisions[n as usize].expanded {
                let ch = &self.chances[c as usize];
                if ch.dist.updates() != ch.visits {
                    return Err(Error::contract(format!(
                        "chance node {c}: {} updates but {} visits",
                        ch.dist.updates(),
                        ch.visits
                    )));
                }
                for (i, (k, _, _)) in ch.children.iter().enumerate() {
                    if ch.children[..i].iter().any(|(k2, _, _)| k2 == k) {
                        return Err(Error::contract(format!("chance node {c}: duplicate outcome key")));
                    }
                }
                let below: u64 = ch.children.iter().map(|(_, _, n)| n).sum();
                if below != ch.visits {
                    return Err(Error::contract(format!(
                        "chance node {c}: {} visits but {below} descents",
                        ch.visits
                    )));
                }
                stack.extend(ch.children.iter().map(|(_, d, _)| *d));
            }
        }
        Ok(())
    }

    pub fn stats(&self, root: NodeId) -> TreeStats {
        let mut depth_histogram = Vec::new();
        let mut frontier = vec![root];
        while !frontier.is_empty() {
            depth_histogram.push(frontier.len());
            let mut next = Vec::new();
            for n in frontier {
                for &(_, c) in &self.decisions[n as usize].expanded {
                    next.extend(self.chances[c as usize].children.iter().map(|(_, d, _)| *d));
                }
            }
            frontier = next;
        }
        TreeStats {
            decision_nodes: self.decisions.len(),
            chance_nodes: self.chances.len(),
            iterations: self.iterations,
            depth_histogram,
            root_children: self.children(root),
        }
    }
}
