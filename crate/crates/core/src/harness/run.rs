//! Seeded execution of experiment runs.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{AlgorithmConfig, ExperimentConfig, UtilityApplication};
use super::domain::AnyEnv;
use super::output::{aggregate, aggregate_csv, gnuplot_script, run_csv, run_file, write_atomic, Aggregate};
use crate::baselines::{LearningSignal, QLearner, QMode};
use crate::error::{Error, Result};
use crate::mo::{Environment, ReturnVector, UtilityFunction, UtilitySpec};
use crate::tree::{Planner, PlannerConfig, TreeReuse, TreeStats};
use crate::SimRng;

/// Random stream of run `index` under `base`: the base seeds the
/// generator and the index selects one of its 2^64 independent streams.
pub fn seed_schedule(base: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(base);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses the machine's parallelism.
    pub jobs: usize,
    /// Overrides applied to the config, recorded in the metadata.
    pub overrides: Vec<String>,
    /// Set to stop runs at the next episode boundary.
    pub interrupt: Option<Arc<AtomicBool>>,
    pub verbose: u8,
    /// Skip writing files.
    pub in_memory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunAccounting {
    pub run: usize,
    pub real_steps: u64,
    /// Full simulated policy executions spent while learning.
    pub simulated_executions: u64,
    pub executions_per_step: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Realised utility of each episode.
    pub utilities: Vec<f64>,
    pub accounting: RunAccounting,
    /// Statistics of the episode's first root after each episode.
    pub tree_stats: Vec<TreeStats>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub runs: Vec<RunResult>,
    pub aggregate: Aggregate,
}

impl ExperimentOutcome {
    /// Mean realised utility over episodes `[from, to)` and all runs.
    pub fn window_mean(&self, from: usize, to: usize) -> f64 {
        let vals: Vec<f64> = self.runs.iter().flat_map(|r| r.utilities[from..to].iter().copied()).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// The scalar signal the Q-learning baseline trains on.
pub fn learning_signal(cfg: &ExperimentConfig) -> LearningSignal {
    if cfg.utility_application == UtilityApplication::PerStep {
        return LearningSignal::Raw;
    }
    match cfg.utility.spec() {
        UtilitySpec::Linear { weights } => LearningSignal::Linear(weights.clone()),
        _ if cfg.domain.objectives() == 1 => LearningSignal::Raw,
        _ => LearningSignal::PerStepUtility(cfg.utility.clone()),
    }
}

fn interrupted(flag: &Option<Arc<AtomicBool>>) -> bool {
    flag.as_ref().is_some_and(|f| f.load(Ordering::SeqCst))
}

/// Executes run `index` of `cfg` and returns its learning curve.
pub fn run_single(cfg: &ExperimentConfig, index: usize, interrupt: &Option<Arc<AtomicBool>>) -> Result<RunResult> {
    let (env, scoring) = AnyEnv::build(cfg)?;
    let mut rng = seed_schedule(cfg.seed, index as u64);
    match &cfg.algorithm {
        AlgorithmConfig::Dmcts {
            replicates,
            alpha_prior,
            tree_reuse,
            artificial_returns,
            ..
        } => {
            let pc = PlannerConfig {
                criterion: cfg.criterion,
                replicates: *replicates,
                alpha_prior: *alpha_prior,
                iterations_per_step: cfg.iterations_per_step(),
                artificial_returns: artificial_returns.clone(),
            };
            run_dmcts(cfg, index, env, scoring, pc, *tree_reuse, &mut rng, interrupt)
        }
        AlgorithmConfig::QLearning { alpha, epsilon } => {
            let objectives = env.objectives();
            let learner = QLearner::new(QMode::Scalar(learning_signal(cfg)), objectives, *alpha, *epsilon, cfg.n_exec)?;
            run_q(cfg, index, env, scoring, learner, &mut rng, interrupt)
        }
        AlgorithmConfig::ScalarisedQLearning { alpha, epsilon } => {
            let objectives = env.objectives();
            let learner = QLearner::new(QMode::Scalarised(scoring.clone()), objectives, *alpha, *epsilon, cfg.n_exec)?;
            run_q(cfg, index, env, scoring, learner, &mut rng, interrupt)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_dmcts(
    cfg: &ExperimentConfig,
    index: usize,
    mut env: AnyEnv,
    scoring: UtilityFunction,
    pc: PlannerConfig,
    reuse: TreeReuse,
    rng: &mut SimRng,
    interrupt: &Option<Arc<AtomicBool>>,
) -> Result<RunResult> {
    let n = env.objectives();
    let mut planner = Planner::new(pc, scoring.clone(), n)?;
    let mut utilities = Vec::with_capacity(cfg.episodes);
    let mut tree_stats = Vec::new();
    let mut real_steps = 0u64;
    let mut simulated = 0u64;
    for _ in 0..cfg.episodes {
        if interrupted(interrupt) {
            return Err(Error::Interrupted);
        }
        let start = env.reset(rng);
        if reuse != TreeReuse::Persistent {
            planner.clear();
        }
        let first_root = planner.episode_root(start);
        let mut root = first_root;
        let mut accrued = ReturnVector::zeros(n);
        while !env.is_terminal() {
            if reuse == TreeReuse::Step {
                planner.clear();
                root = planner.episode_root(env.state());
            }
            let before = planner.iterations();
            let action = planner.plan_step(root, &env, &accrued, rng)?;
            simulated += planner.iterations() - before;
            let step = env.step(action, rng)?;
            accrued.add_assign_checked(&step.reward)?;
            real_steps += 1;
            if !step.terminal && reuse != TreeReuse::Step {
                root = planner.advance_root(root, action, &step)?;
            }
        }
        utilities.push(scoring.evaluate(&accrued)?);
        if cfg.dump_tree && reuse != TreeReuse::Step {
            tree_stats.push(planner.stats(first_root));
        }
    }
    Ok(RunResult {
        utilities,
        accounting: accounting(index, real_steps, simulated),
        tree_stats,
    })
}

fn run_q(
    cfg: &ExperimentConfig,
    index: usize,
    mut env: AnyEnv,
    scoring: UtilityFunction,
    mut learner: QLearner,
    rng: &mut SimRng,
    interrupt: &Option<Arc<AtomicBool>>,
) -> Result<RunResult> {
    let n = env.objectives();
    let mut utilities = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        if interrupted(interrupt) {
            return Err(Error::Interrupted);
        }
        env.reset(rng);
        let mut accrued = ReturnVector::zeros(n);
        while !env.is_terminal() {
            let key = (env.state(), env.timestep());
            let action = learner.act(&env, episode, rng)?;
            let step = env.step(action, rng)?;
            learner.observe(key, action, &step.reward, &env)?;
            accrued.add_assign_checked(&step.reward)?;
        }
        utilities.push(scoring.evaluate(&accrued)?);
    }
    let b = learner.budget;
    Ok(RunResult {
        utilities,
        accounting: accounting(index, b.real_steps, b.simulated_episodes),
        tree_stats: Vec::new(),
    })
}

fn accounting(run: usize, real_steps: u64, simulated: u64) -> RunAccounting {
    RunAccounting {
        run,
        real_steps,
        simulated_executions: simulated,
        executions_per_step: if real_steps == 0 { 0.0 } else { simulated as f64 / real_steps as f64 },
    }
}

/// Runs every seed of `cfg`, writing `<output_dir>/<name>/run-k.csv` as
/// each run finishes, then `aggregate.csv`, `metadata.json` and `plot.gp`.
/// After an interruption the completed run files stay in place and
/// [`Error::Interrupted`] is returned.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    // fail on unreadable domain files before spawning work
    AnyEnv::build(cfg)?;
    let dir = cfg.output_dir.join(&cfg.name);
    let started = Instant::now();
    let jobs = if opts.jobs == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        opts.jobs
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.min(cfg.runs))
        .build()
        .map_err(|e| Error::Io(format!("worker pool: {e}")))?;
    let results: Vec<Result<RunResult>> = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|k| {
                let r = run_single(cfg, k, &opts.interrupt)?;
                if !opts.in_memory {
                    write_atomic(&run_file(&dir, k), run_csv(&r.utilities).as_bytes())?;
                    if cfg.dump_tree && !r.tree_stats.is_empty() {
                        let lines: Vec<String> = r
                            .tree_stats
                            .iter()
                            .map(|s| serde_json::to_string(s).expect("stats serialise"))
                            .collect();
                        write_atomic(&dir.join(format!("tree-run-{k}.jsonl")), (lines.join("\n") + "\n").as_bytes())?;
                    }
                }
                if opts.verbose > 0 {
                    let tail = &r.utilities[r.utilities.len().saturating_sub(100)..];
                    eprintln!(
                        "{}: run {k} finished, mean utility of last {} episodes {:.6}",
                        cfg.name,
                        tail.len(),
                        tail.iter().sum::<f64>() / tail.len() as f64
                    );
                }
                Ok(r)
            })
            .collect()
    });
    let mut runs = Vec::with_capacity(results.len());
    let mut was_interrupted = false;
    for r in results {
        match r {
            Ok(r) => runs.push(r),
            Err(Error::Interrupted) => was_interrupted = true,
            Err(e) => return Err(e),
        }
    }
    if was_interrupted {
        return Err(Error::Interrupted);
    }
    let curves: Vec<Vec<f64>> = runs.iter().map(|r| r.utilities.clone()).collect();
    let agg = aggregate(&curves)?;
    if !opts.in_memory {
        write_atomic(&dir.join("aggregate.csv"), aggregate_csv(&agg, cfg.smoothing_window).as_bytes())?;
        let meta = metadata(cfg, opts, &runs, started.elapsed().as_secs_f64());
        let text = serde_json::to_string_pretty(&meta).expect("metadata serialises") + "\n";
        write_atomic(&dir.join("metadata.json"), text.as_bytes())?;
        let script = gnuplot_script(&cfg.name, "aggregate.csv", &format!("{}.png", cfg.name));
        write_atomic(&dir.join("plot.gp"), script.as_bytes())?;
    }
    Ok(ExperimentOutcome {
        dir,
        runs,
        aggregate: agg,
    })
}

fn metadata(cfg: &ExperimentConfig, opts: &RunOptions, runs: &[RunResult], elapsed: f64) -> serde_json::Value {
    let signal = match cfg.algorithm {
        AlgorithmConfig::QLearning { .. } => Some(learning_signal(cfg).describe()),
        AlgorithmConfig::ScalarisedQLearning { .. } => Some("vector reward, utility applied to Q-vectors at selection".to_string()),
        AlgorithmConfig::Dmcts { .. } => None,
    };
    let realised = match cfg.utility_application {
        UtilityApplication::Cumulative => "utility of the realised cumulative return",
        UtilityApplication::PerStep => "sum of per-step utilities of the realised rewards",
    };
    json!({
        "config": cfg,
        "overrides": opts.overrides,
        "domain": cfg.domain.id(),
        "algorithm": cfg.algorithm.id(),
        "episode_score": realised,
        "baseline_learning_signal": signal,
        "fairness": {
            "n_exec": cfg.n_exec,
            "iterations_per_step": cfg.iterations_per_step(),
            "runs": runs.iter().map(|r| &r.accounting).collect::<Vec<_>>(),
        },
        "smoothing_window": cfg.smoothing_window,
        "files": {
            "runs": (0..cfg.runs).map(|k| format!("run-{k}.csv")).collect::<Vec<_>>(),
            "aggregate": "aggregate.csv",
            "plot": "plot.gp",
        },
        "elapsed_seconds": elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn distinct_indices_give_distinct_streams() {
        let a = seed_schedule(7, 0).next_u64();
        let b = seed_schedule(7, 1).next_u64();
        assert_ne!(a, b);
        let mut x = seed_schedule(7, 0);
        let mut y = seed_schedule(7, 0);
        for _ in 0..100 {
            assert_eq!(x.next_u64(), y.next_u64());
        }
    }

    #[test]
    fn hundred_streams_have_distinct_prefixes() {
        let prefixes: Vec<Vec<u64>> = (0..100)
            .map(|k| {
                let mut r = seed_schedule(7, k);
                (0..16).map(|_| r.next_u64()).collect()
            })
            .collect();
        for i in 0..prefixes.len() {
            for j in 0..i {
                assert_ne!(prefixes[i], prefixes[j], "{i} {j}");
            }
        }
    }
}
