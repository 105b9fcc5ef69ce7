use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmcts::envs::{DdstMap, FishwoodParams, RiskMdpParams};
use dmcts::harness::{
    self, output, seed_schedule, AlgorithmConfig, AnyEnv, DomainConfig, ExperimentConfig, RunOptions,
};
use dmcts::mo::{Environment, ReturnVector, UtilityFunction};
use dmcts::oracle::{self, FishwoodDp};
use dmcts::{tree::TreeReuse, Error};
use serde_json::json;

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INTERRUPTED: u8 = 130;

#[derive(Parser, Debug)]
#[command(name = "dmcts", version, about = "Distributional Monte Carlo tree search experiments")]
struct Cli {
    /// Increase logging; repeat for more detail.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write its learning curves.
    Run(RunArgs),
    /// Check a config and report every invalid field.
    Validate(ConfigArgs),
    /// Print exact reference solutions.
    Oracle(OracleArgs),
    /// Re-aggregate run files and write a gnuplot script.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Set a config field by dotted path, e.g. `algorithm.replicates=20`.
    #[arg(short = 'o', long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output root; results go to `<out>/<name>/`.
    #[arg(long, env = "DMCTS_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(short, long, default_value_t = 0)]
    jobs: usize,
    /// Rebuild the search tree before every real step.
    #[arg(long)]
    fresh_tree: bool,
    /// Write per-episode tree statistics as JSON lines.
    #[arg(long)]
    dump_tree: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OracleDomain {
    Fishwood,
    RiskMdp,
    Ddst,
    /// Exhaustive expectimax at the configured domain's start state.
    Esr,
}

#[derive(Args, Debug)]
struct OracleArgs {
    domain: OracleDomain,
    /// Take domain parameters (and, for `esr`, the utility) from this config.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// DDST map: `default` or a map file.
    #[arg(long, default_value = "default")]
    map: String,
    /// DDST target return vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "54,0,-14")]
    target: Vec<f64>,
    /// Node bound for exhaustive enumeration.
    #[arg(long, default_value_t = oracle::DEFAULT_NODE_BUDGET)]
    budget: u64,
    /// Also write the solution as JSON to this file.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Experiment directory holding `run-k.csv` files.
    #[arg(long)]
    dir: PathBuf,
    /// Smoothing window in episodes.
    #[arg(long, default_value_t = 50)]
    window: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args, cli.verbose),
        Command::Validate(args) => cmd_validate(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(match e {
                Error::Io(_) => EXIT_IO,
                Error::Interrupted => EXIT_INTERRUPTED,
                _ => EXIT_CONFIG,
            })
        }
    }
}

fn report(e: &Error) {
    match e {
        Error::Validation(fields) => {
            eprintln!("error: invalid configuration");
            for f in fields {
                eprintln!("  {f}");
            }
        }
        Error::Interrupted => eprintln!("interrupted: completed run files were kept"),
        other => eprintln!("error: {other}"),
    }
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    if !args.config.exists() {
        return Err(Error::Io(format!("{}: no such file", args.config.display())));
    }
    ExperimentConfig::load(&args.config, &args.overrides)
}

fn cmd_validate(args: ConfigArgs) -> Result<(), Error> {
    let cfg = load(&args)?;
    AnyEnv::build(&cfg)?;
    println!(
        "{}: ok ({} / {}, {} runs x {} episodes, n_exec {})",
        cfg.name,
        cfg.domain.id(),
        cfg.algorithm.id(),
        cfg.runs,
        cfg.episodes,
        cfg.n_exec
    );
    Ok(())
}

fn cmd_run(args: RunArgs, verbose: u8) -> Result<(), Error> {
    let mut overrides = args.config.overrides.clone();
    if args.fresh_tree {
        overrides.push("algorithm.tree_reuse=\"step\"".into());
    }
    if args.dump_tree {
        overrides.push("dump_tree=true".into());
    }
    let mut cfg = ExperimentConfig::load(&args.config.config, &overrides).map_err(|e| match e {
        Error::Config(_) if !args.config.config.exists() => {
            Error::Io(format!("{}: no such file", args.config.config.display()))
        }
        e => e,
    })?;
    if args.fresh_tree && !matches!(cfg.algorithm, AlgorithmConfig::Dmcts { tree_reuse: TreeReuse::Step, .. }) {
        return Err(Error::Validation(vec!["--fresh-tree: only applies to dmcts".into()]));
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    for o in &overrides {
        eprintln!("override {o}");
    }
    let interrupt = Arc::new(AtomicBool::new(false));
    let flag = interrupt.clone();
    ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(EXIT_INTERRUPTED as i32);
        }
        eprintln!("draining: finishing the current episode of each run");
    })
    .map_err(|e| Error::Io(format!("signal handler: {e}")))?;
    let opts = RunOptions {
        jobs: args.jobs,
        overrides,
        interrupt: Some(interrupt),
        verbose,
        in_memory: false,
    };
    let outcome = harness::run_experiment(&cfg, &opts)?;
    let n = outcome.aggregate.mean.len();
    let tail = &outcome.aggregate.mean[n.saturating_sub(cfg.smoothing_window)..];
    println!(
        "{}: {} runs x {} episodes -> {} (final mean utility {:.6})",
        cfg.name,
        cfg.runs,
        cfg.episodes,
        outcome.dir.display(),
        tail.iter().sum::<f64>() / tail.len() as f64
    );
    Ok(())
}

fn oracle_config(args: &OracleArgs) -> Result<Option<ExperimentConfig>, Error> {
    args.config.as_ref().map(|p| ExperimentConfig::load(p, &[])).transpose()
}

fn cmd_oracle(args: OracleArgs) -> Result<(), Error> {
    let cfg = oracle_config(&args)?;
    let solution = match args.domain {
        OracleDomain::Fishwood => {
            let params = match cfg.as_ref().map(|c| &c.domain) {
                Some(DomainConfig::Fishwood { params }) => *params,
                Some(d) => return Err(Error::Config(format!("config domain is {}, not fishwood", d.id()))),
                None => FishwoodParams::default(),
            };
            let s = FishwoodDp::solve(params)?.solution();
            println!("fishwood horizon {}: V* = {:.6}", params.horizon, s.value);
            println!("  stay {:.6}  move {:.6}", s.action_values[0], s.action_values[1]);
            json!({"domain": "fishwood", "params": params, "solution": s})
        }
        OracleDomain::RiskMdp => {
            let params = match cfg.as_ref() {
                Some(c) => c.domain.risk_params()?,
                None => RiskMdpParams::default(),
            };
            let s = oracle::risk_mdp_exact(&params)?;
            println!("risk-mdp: optimal E[u] = {:.6}", s.optimal_value);
            for (a, v) in s.constant_policy_values.iter().enumerate() {
                let mark = if (v - s.optimal_value).abs() < 1e-12 { "  optimal" } else { "" };
                println!("  invest {}: E[u] = {v:.6}{mark}", params.investments[a]);
            }
            json!({"domain": "risk_mdp", "params": params, "solution": s})
        }
        OracleDomain::Ddst => {
            let map = match args.map.as_str() {
                "default" => DdstMap::default_map(),
                path => DdstMap::load(Path::new(path))?,
            };
            let u = UtilityFunction::target(args.target.clone())?;
            let s = oracle::ddst_safe_paths(&map, &u)?;
            for r in &s.routes {
                match (r.safe_steps, r.utility) {
                    (Some(k), Some(v)) => println!("  treasure {} at {:?}: {k} safe steps, u = {v:.6}", r.value, r.position),
                    _ => println!("  treasure {} at {:?}: no safe path", r.value, r.position),
                }
            }
            println!(
                "ddst: best safe path has length {}, u = {:.6}",
                s.best_path.len(),
                s.best_utility
            );
            json!({"domain": "ddst", "target": args.target, "solution": s})
        }
        OracleDomain::Esr => {
            let cfg = cfg.ok_or_else(|| Error::Config("oracle esr needs --config".into()))?;
            let (mut env, _) = AnyEnv::build(&cfg)?;
            let start = env.reset(&mut seed_schedule(cfg.seed, 0));
            let scoring = match cfg.utility_application {
                harness::UtilityApplication::Cumulative => cfg.utility.clone(),
                harness::UtilityApplication::PerStep => UtilityFunction::linear(vec![1.0])?,
            };
            let values =
                oracle::esr_action_values(&env, &ReturnVector::zeros(env.objectives()), &scoring, args.budget)?;
            let best = values
                .iter()
                .enumerate()
                .fold(0, |b, (a, v)| if *v > values[b] { a } else { b });
            println!("esr ({}) at start state {start}: best action {best}", cfg.domain.id());
            for (a, v) in values.iter().enumerate() {
                println!("  action {a}: {v:.6}");
            }
            json!({"domain": cfg.domain.id(), "start_state": start, "action_values": values, "best_action": best})
        }
    };
    if let Some(path) = args.json {
        let text = serde_json::to_string_pretty(&solution).expect("solution serialises") + "\n";
        output::write_atomic(&path, text.as_bytes())?;
    }
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<(), Error> {
    if args.window == 0 {
        return Err(Error::Validation(vec!["--window: must be at least 1".into()]));
    }
    let entries = std::fs::read_dir(&args.dir).map_err(|e| Error::Io(format!("{}: {e}", args.dir.display())))?;
    let mut runs: Vec<(usize, PathBuf)> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let k = name.strip_prefix("run-")?.strip_suffix(".csv")?.parse().ok()?;
            Some((k, e.path()))
        })
        .collect();
    if runs.is_empty() {
        return Err(Error::Io(format!("{}: no run-k.csv files", args.dir.display())));
    }
    runs.sort();
    let paths: Vec<PathBuf> = runs.into_iter().map(|(_, p)| p).collect();
    let csv = output::aggregate_files(&paths, args.window)?;
    output::write_atomic(&args.dir.join("aggregate.csv"), csv.as_bytes())?;
    let title = args
        .dir
        .file_name()
        .map_or("experiment".into(), |n| n.to_string_lossy().into_owned());
    let script = output::gnuplot_script(&title, "aggregate.csv", &format!("{title}.png"));
    output::write_atomic(&args.dir.join("plot.gp"), script.as_bytes())?;
    println!("{}: aggregated {} runs", args.dir.display(), paths.len());
    Ok(())
}
