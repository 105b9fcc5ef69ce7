//! Experiment configuration files and dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::EpsilonSchedule;
use crate::envs::{DdstMap, FishwoodParams, RedeedParams, RiskMdpParams};
use crate::error::{Error, Result};
use crate::mo::{Criterion, UtilityFunction};
use crate::tree::{ArtificialReturns, TreeReuse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    RiskMdp {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params: Option<RiskMdpParams>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params_file: Option<PathBuf>,
    },
    Fishwood {
        #[serde(default)]
        params: FishwoodParams,
    },
    Redeed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params_file: Option<PathBuf>,
    },
    Ddst {
        /// Shipped default map when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        map_file: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p_shark: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<usize>,
    },
}

impl DomainConfig {
    pub fn id(&self) -> &'static str {
        match self {
            DomainConfig::RiskMdp { .. } => "risk_mdp",
            DomainConfig::Fishwood { .. } => "fishwood",
            DomainConfig::Redeed { .. } => "redeed",
            DomainConfig::Ddst { .. } => "ddst",
        }
    }

    pub fn objectives(&self) -> usize {
        match self {
            DomainConfig::RiskMdp { .. } => 1,
            DomainConfig::Fishwood { .. } => 2,
            DomainConfig::Redeed { .. } | DomainConfig::Ddst { .. } => 3,
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        match self {
            DomainConfig::RiskMdp { params_file, .. } => fix(params_file),
            DomainConfig::Redeed { params_file } => fix(params_file),
            DomainConfig::Ddst { map_file, .. } => fix(map_file),
            DomainConfig::Fishwood { .. } => {}
        }
    }

    pub fn risk_params(&self) -> Result<RiskMdpParams> {
        match self {
            DomainConfig::RiskMdp { params, params_file } => {
                let p = match (params, params_file) {
                    (Some(p), _) => p.clone(),
                    (None, Some(f)) => serde_json::from_str(&read(f)?)?,
                    (None, None) => RiskMdpParams::default(),
                };
                p.validate()?;
                Ok(p)
            }
            _ => Err(Error::contract("not a risk MDP domain")),
        }
    }

    pub fn redeed_params(&self) -> Result<RedeedParams> {
        match self {
            DomainConfig::Redeed { params_file: Some(f) } => RedeedParams::load(f),
            DomainConfig::Redeed { params_file: None } => Ok(RedeedParams::sample()),
            _ => Err(Error::contract("not a redeed domain")),
        }
    }

    pub fn ddst_map(&self) -> Result<DdstMap> {
        match self {
            DomainConfig::Ddst {
                map_file,
                p_shark,
                horizon,
            } => {
                let mut map = match map_file {
                    Some(f) => DdstMap::load(f)?,
                    None => DdstMap::default_map(),
                };
                if let Some(p) = p_shark {
                    map.p_shark = *p;
                }
                if let Some(h) = horizon {
                    map.horizon = *h;
                }
                // re-validate after overrides
                DdstMap::from_json(&map.to_json())
            }
            _ => Err(Error::contract("not a ddst domain")),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    Dmcts {
        #[serde(default = "default_replicates")]
        replicates: usize,
        #[serde(default = "one")]
        alpha_prior: f64,
        /// Learning iterations per real step are `n_exec` times this.
        #[serde(default = "one_usize")]
        iterations_multiplier: usize,
        #[serde(default)]
        tree_reuse: TreeReuse,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        artificial_returns: Option<ArtificialReturns>,
    },
    QLearning {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_epsilon")]
        epsilon: EpsilonSchedule,
    },
    ScalarisedQLearning {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_epsilon")]
        epsilon: EpsilonSchedule,
    },
}

fn default_replicates() -> usize {
    crate::bts::DEFAULT_REPLICATES
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_alpha() -> f64 {
    0.1
}
fn default_epsilon() -> EpsilonSchedule {
    EpsilonSchedule::Fixed { epsilon: 0.1 }
}
fn default_runs() -> usize {
    10
}
fn default_window() -> usize {
    50
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl AlgorithmConfig {
    pub fn id(&self) -> &'static str {
        match self {
            AlgorithmConfig::Dmcts { .. } => "dmcts",
            AlgorithmConfig::QLearning { .. } => "q_learning",
            AlgorithmConfig::ScalarisedQLearning { .. } => "scalarised_q_learning",
        }
    }
}

/// Whether the utility scores the cumulative return or each step's reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityApplication {
    #[default]
    Cumulative,
    /// Rewards become `u(r_t)` and episodes are scored by their sum.
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub domain: DomainConfig,
    pub algorithm: AlgorithmConfig,
    pub criterion: Criterion,
    pub utility: UtilityFunction,
    #[serde(default)]
    pub utility_application: UtilityApplication,
    pub n_exec: usize,
    pub episodes: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
    /// Write per-episode tree statistics for DMCTS runs.
    #[serde(default)]
    pub dump_tree: bool,
}

impl ExperimentConfig {
    /// Parses a config file, applies `key=value` overrides and validates.
    /// Relative paths inside the file resolve against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = read(path)?;
        let mut cfg = Self::from_json_with_overrides(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.domain.resolve(base);
        Ok(cfg)
    }

    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == "." || self.name == ".." {
            errs.push("name: must be a non-empty plain directory name".to_string());
        }
        if self.runs == 0 {
            errs.push("runs: must be at least 1".into());
        }
        if self.episodes == 0 {
            errs.push("episodes: must be at least 1".into());
        }
        if self.n_exec == 0 {
            errs.push("n_exec: must be at least 1".into());
        }
        if self.smoothing_window == 0 {
            errs.push("smoothing_window: must be at least 1".into());
        }
        let n = self.domain.objectives();
        let scored = match self.utility_application {
            UtilityApplication::Cumulative => n,
            UtilityApplication::PerStep => 1,
        };
        if self.utility.objectives() != n {
            errs.push(format!(
                "utility: expects {} objectives but domain {} has {n}",
                self.utility.objectives(),
                self.domain.id()
            ));
        }
        match &self.algorithm {
            AlgorithmConfig::Dmcts {
                replicates,
                alpha_prior,
                iterations_multiplier,
                artificial_returns,
                ..
            } => {
                if *replicates == 0 {
                    errs.push("algorithm.replicates: must be at least 1".into());
                }
                if !(*alpha_prior > 0.0 && alpha_prior.is_finite()) {
                    errs.push("algorithm.alpha_prior: must be positive".into());
                }
                if *iterations_multiplier == 0 {
                    errs.push("algorithm.iterations_multiplier: must be at least 1".into());
                }
                if let Some(a) = artificial_returns {
                    if let Err(e) = a.validate(scored) {
                        errs.push(format!("algorithm.artificial_returns: {e}"));
                    }
                }
            }
            AlgorithmConfig::QLearning { alpha, epsilon } | AlgorithmConfig::ScalarisedQLearning { alpha, epsilon } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    errs.push("algorithm.alpha: must lie in (0, 1]".into());
                }
                if epsilon.validate().is_err() {
                    errs.push("algorithm.epsilon: values must lie in [0, 1]".into());
                }
                if matches!(self.algorithm, AlgorithmConfig::QLearning { .. }) && self.criterion == Criterion::Ser {
                    errs.push("criterion: q_learning runs under esr; use scalarised_q_learning for ser".into());
                }
            }
        }
        if self.utility_application == UtilityApplication::PerStep && self.criterion == Criterion::Ser {
            errs.push("utility_application: per_step scoring is only defined under esr".into());
        }
        if let DomainConfig::Ddst { p_shark: Some(p), .. } = &self.domain {
            if !(0.0..=1.0).contains(p) {
                errs.push("domain.p_shark: must lie in [0, 1]".into());
            }
        }
        if let DomainConfig::Ddst { horizon: Some(0), .. } = &self.domain {
            errs.push("domain.horizon: must be at least 1".into());
        }
        if let DomainConfig::RiskMdp { params: Some(p), .. } = &self.domain {
            if let Err(e) = p.validate() {
                errs.push(format!("domain.params: {e}"));
            }
        }
        if let DomainConfig::Fishwood { params } = &self.domain {
            if let Err(e) = params.validate() {
                errs.push(format!("domain.params: {e}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn iterations_per_step(&self) -> usize {
        match &self.algorithm {
            AlgorithmConfig::Dmcts {
                iterations_multiplier, ..
            } => self.n_exec * iterations_multiplier,
            _ => self.n_exec,
        }
    }
}

/// Sets the dotted `path` in `value` to `raw`, read as JSON when it parses
/// and as a string otherwise.
pub fn apply_override(value: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {assignment:?} is not key=value")))?;
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut at = value;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::config(format!("override path {path:?} has an empty segment")));
        }
        let last = i + 1 == parts.len();
        at = match at {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), new);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::config(format!("override path {path:?}: {part:?} is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(format!("override path {path:?}: index {idx} out of {len}")))?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(format!("override path {path:?} descends into a scalar"))),
        };
    }
    Ok(())
}
