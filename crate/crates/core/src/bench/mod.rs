//! Multi-seed experiments: every (agent, seed) cell is run, failures
//! included, and summarized with seeded statistics.

mod report;
mod single;
pub mod stats;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{run_episode, train_on_env, Agent, AgentError, AgentSpec, Hyper, TabularAgent, QTABLE_VERSION};
use crate::instance::{generate_instance, Instance, InstanceError, Shape, SCHEMA_VERSION};
use crate::mdp::{check_breakdown, make_env, ActionSpec, BreakdownKind, EnvConfig, MdpError, ObsSpec, RewardSpec, Shaping, PROTOCOL_VERSION};
use crate::notation::{NotationError, ObjectiveSpec, ProblemTriplet};
use crate::simcore::{Outcome, ReplayError};

pub use report::{render_report, write_report, ReportFormat};
pub use single::{run_single, verify_trace, EpisodeConfig, SingleRun, TraceCheck};
pub use stats::{paired_sign_test, sign_test, summarize, Paired, Summary};

pub const CONFIG_VERSION: u32 = 1;
pub const REPORT_VERSION: u32 = 1;
pub const MIN_SEEDS: usize = 10;
pub const DEFAULT_TRAIN_EPISODES: usize = 500;
pub const DEFAULT_TRAIN_SEEDS: usize = 20;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Notation(#[from] NotationError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn invalid(msg: impl Into<String>) -> BenchError {
    BenchError::Invalid(msg.into())
}

pub(crate) fn read(path: &Path) -> Result<String, BenchError> {
    std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse a `.json` file as JSON and anything else as TOML.
pub fn load_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BenchError> {
    let text = read(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| BenchError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum InstanceSource {
    /// Native JSON or OR-Library text.
    File { path: PathBuf },
    Generator {
        triplet: ProblemTriplet,
        shape: Shape,
        seed: u64,
    },
    Inline { instance: Box<Instance> },
}

impl InstanceSource {
    pub fn load(&self) -> Result<Instance, BenchError> {
        match self {
            InstanceSource::File { path } => Ok(Instance::load(&read(path)?)?),
            InstanceSource::Generator { triplet, shape, seed } => Ok(generate_instance(triplet, shape, *seed)?),
            InstanceSource::Inline { instance } => Ok((**instance).clone()),
        }
    }

    /// Make a relative file path relative to `dir`.
    pub fn rebase(&mut self, dir: &Path) {
        if let InstanceSource::File { path } = self {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
    }
}

fn direct() -> ActionSpec {
    ActionSpec::Direct
}

fn terminal() -> Shaping {
    Shaping::TerminalObjective
}

/// Everything needed to build an environment, shared by experiment and
/// single-episode configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSetup {
    pub instance: InstanceSource,
    pub breakdown: BreakdownKind,
    #[serde(default)]
    pub obs: ObsSpec,
    #[serde(default = "direct")]
    pub action: ActionSpec,
    #[serde(default = "terminal")]
    pub shaping: Shaping,
    /// γ field in triplet notation; defaults to the instance's objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub allow_wait: bool,
}

impl EnvSetup {
    pub fn new(instance: InstanceSource, breakdown: BreakdownKind) -> Self {
        EnvSetup {
            instance,
            breakdown,
            obs: ObsSpec::default(),
            action: ActionSpec::Direct,
            shaping: Shaping::TerminalObjective,
            objective: None,
            horizon: None,
            allow_wait: false,
        }
    }

    pub fn objective_for(&self, inst: &Instance) -> Result<ObjectiveSpec, BenchError> {
        match &self.objective {
            Some(g) => Ok(g.parse()?),
            None => Ok(inst.triplet.gamma.clone()),
        }
    }

    pub fn env_config(&self, inst: &Instance) -> Result<EnvConfig, BenchError> {
        let reward = RewardSpec {
            shaping: self.shaping,
            objective: self.objective_for(inst)?,
        };
        let mut config = EnvConfig::new(self.breakdown.clone(), self.action.clone(), reward);
        config.obs = self.obs.clone();
        config.horizon = self.horizon;
        config.allow_wait = self.allow_wait;
        check_breakdown(inst, &config.breakdown)?;
        Ok(config)
    }
}

fn default_train_episodes() -> usize {
    DEFAULT_TRAIN_EPISODES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Episode seeds for training. When empty, seeds above the largest test
    /// seed are used.
    #[serde(default)]
    pub train_seeds: Vec<u64>,
    #[serde(default = "default_train_episodes")]
    pub train_episodes: usize,
    /// Dynamic setting: train on the first fraction of the job stream and
    /// evaluate every agent on the rest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_fraction: Option<f64>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_seeds: vec![],
            train_episodes: DEFAULT_TRAIN_EPISODES,
            stream_fraction: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub env: EnvSetup,
    pub agents: Vec<AgentSpec>,
    /// Test seeds; one cell per agent and seed.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub bootstrap_seed: u64,
    /// Worker threads; `None` lets the pool decide.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(env: EnvSetup, agents: Vec<AgentSpec>, seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            name: None,
            env,
            agents,
            seeds,
            split: SplitSpec::default(),
            bootstrap_seed: 0,
            threads: None,
        }
    }

    /// Read a `.toml` or `.json` config. Relative instance paths are taken
    /// relative to the config file.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let mut cfg: ExperimentConfig = load_file(path)?;
        if let Some(dir) = path.parent() {
            cfg.env.instance.rebase(dir);
        }
        Ok(cfg)
    }

    /// Training seeds, derived when the split lists none.
    pub fn train_seeds(&self) -> Vec<u64> {
        if !self.split.train_seeds.is_empty() {
            return self.split.train_seeds.clone();
        }
        let start = self.seeds.iter().max().map_or(0, |m| m + 1);
        (start..start + DEFAULT_TRAIN_SEEDS as u64).collect()
    }

    /// Structural checks that need no instance.
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.version != CONFIG_VERSION {
            return Err(BenchError::Version {
                found: self.version,
                expected: CONFIG_VERSION,
            });
        }
        if self.seeds.len() < MIN_SEEDS {
            return Err(invalid(format!("at least {MIN_SEEDS} seeds are required, got {}", self.seeds.len())));
        }
        let test: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if test.len() != self.seeds.len() {
            return Err(invalid("seeds must be distinct"));
        }
        if let Some(s) = self.split.train_seeds.iter().find(|s| test.contains(s)) {
            return Err(invalid(format!("seed {s} is both a train and a test seed")));
        }
        if !self.agents.iter().any(|a| matches!(a, AgentSpec::Rule { .. })) {
            return Err(invalid("the agent list needs at least one rule baseline"));
        }
        if !self.agents.contains(&AgentSpec::Random) {
            return Err(invalid("the agent list needs the random baseline"));
        }
        let names: BTreeSet<String> = self.agents.iter().map(|a| a.to_string()).collect();
        if names.len() != self.agents.len() {
            return Err(invalid("agents must be distinct"));
        }
        if self.agents.iter().any(|a| a.needs_training()) && self.split.train_episodes == 0 {
            return Err(invalid("train_episodes must be positive"));
        }
        if let Some(f) = self.split.stream_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(invalid("stream_fraction must lie strictly between 0 and 1"));
            }
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be positive"));
        }
        Ok(())
    }
}

/// Builds an agent for a cell from the cell seed.
pub type AgentFactory = Arc<dyn Fn(u64) -> Box<dyn Agent> + Send + Sync>;

/// An agent that is not expressible as an [`AgentSpec`], such as a test stub.
#[derive(Clone)]
pub struct CustomAgent {
    pub name: String,
    pub factory: AgentFactory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// One (agent, seed) cell. Rows are always evaluated on the test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub agent: String,
    pub seed: u64,
    pub split: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub objective: Option<f64>,
    pub trace_hash: Option<String>,
    pub steps: usize,
    pub replans: usize,
    pub plan_fallbacks: usize,
    pub train_episodes: usize,
    /// Episode seeds seen during training.
    pub train_seeds: Vec<u64>,
    pub runtime_ms: f64,
}

impl CellResult {
    fn failed(agent: &str, seed: u64, error: String) -> Self {
        CellResult {
            agent: agent.to_string(),
            seed,
            split: "test".into(),
            status: CellStatus::Failed,
            error: Some(error),
            objective: None,
            trace_hash: None,
            steps: 0,
            replans: 0,
            plan_fallbacks: 0,
            train_episodes: 0,
            train_seeds: vec![],
            runtime_ms: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: String,
    pub failed: usize,
    #[serde(flatten)]
    pub stats: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub agent: String,
    pub baseline: String,
    #[serde(flatten)]
    pub test: Paired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactVersions {
    pub package: String,
    pub config: u32,
    pub report: u32,
    pub instance_schema: u32,
    pub qtable: u32,
    pub protocol: u32,
}

impl Default for ArtifactVersions {
    fn default() -> Self {
        ArtifactVersions {
            package: env!("CARGO_PKG_VERSION").to_string(),
            config: CONFIG_VERSION,
            report: REPORT_VERSION,
            instance_schema: SCHEMA_VERSION,
            qtable: QTABLE_VERSION,
            protocol: PROTOCOL_VERSION,
        }
    }
}

/// Facts about the evaluated problem, echoed for disclosure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupEcho {
    pub instance_name: Option<String>,
    pub triplet: String,
    pub objective: String,
    pub n_jobs: usize,
    pub n_machines: usize,
    pub train_jobs: usize,
    pub test_jobs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub versions: ArtifactVersions,
    pub setup: SetupEcho,
    pub agents: Vec<String>,
    /// Agents every other agent is compared against.
    pub baselines: Vec<String>,
    pub train_seeds: Vec<u64>,
    pub rows: Vec<CellResult>,
    pub summaries: Vec<AgentSummary>,
    pub comparisons: Vec<Comparison>,
}

impl RunReport {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.status == CellStatus::Failed).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn row(&self, agent: &str, seed: u64) -> Option<&CellResult> {
        self.rows.iter().find(|r| r.agent == agent && r.seed == seed)
    }
}

/// Split the job stream: the first `fraction` of jobs (at least one) for
/// training, the rest for testing.
pub fn stream_split(inst: &Instance, fraction: f64) -> Result<(Instance, Instance), BenchError> {
    let n = inst.n_jobs();
    if n < 2 {
        return Err(invalid("a stream split needs at least two jobs"));
    }
    let cut = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    Ok((inst.sub_instance(0..cut), inst.sub_instance(cut..n)))
}

enum Roster<'a> {
    Spec(&'a AgentSpec),
    Custom(&'a CustomAgent),
}

struct Plan<'a> {
    train: Instance,
    test: Instance,
    config: EnvConfig,
    train_seeds: Vec<u64>,
    episodes: usize,
    roster: Vec<(String, Roster<'a>)>,
}

impl Plan<'_> {
    fn cell(&self, agent: usize, seed: u64) -> Result<CellResult, String> {
        let (name, who) = &self.roster[agent];
        let started = Instant::now();
        let mut train_seeds = BTreeSet::new();
        let mut agent: Box<dyn Agent> = match who {
            Roster::Custom(c) => (c.factory)(seed),
            Roster::Spec(AgentSpec::Tabular { method, preset }) => {
                let hyper = Hyper::preset(preset).ok_or_else(|| format!("unknown preset {preset}"))?;
                let env = make_env(&self.train, self.config.clone(), self.train_seeds[0]).map_err(|e| e.to_string())?;
                let (table, used) = train_on_env(*method, &hyper, env, self.train_seeds.clone(), self.episodes, seed)
                    .map_err(|e| e.to_string())?;
                train_seeds = used;
                Box::new(TabularAgent::new(table, self.config.action.clone()))
            }
            Roster::Spec(spec) => spec.build(seed).expect("untrained agent"),
        };
        let config = agent.env_config(&self.config, &self.test);
        let mut env = make_env(&self.test, config, seed).map_err(|e| e.to_string())?;
        let ep = run_episode(&mut env, agent.as_mut()).map_err(|e| e.to_string())?;
        let mut row = CellResult {
            agent: name.clone(),
            seed,
            split: "test".into(),
            status: CellStatus::Ok,
            error: None,
            objective: Some(ep.objective),
            trace_hash: Some(ep.trace_hash),
            steps: ep.steps,
            replans: ep.replans,
            plan_fallbacks: ep.plan_fallbacks,
            train_episodes: if train_seeds.is_empty() { 0 } else { self.episodes },
            train_seeds: train_seeds.into_iter().collect(),
            runtime_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        if let Outcome::Deadlock { diagnostic, .. } = ep.outcome {
            row.status = CellStatus::Failed;
            row.objective = None;
            row.error = Some(format!("deadlock: {diagnostic}"));
        }
        Ok(row)
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, BenchError> {
    run_experiment_with(cfg, &[])
}

/// Run every (agent, seed) cell, with `extra` agents appended to the roster.
/// Crashing or failing cells are kept as failed rows.
pub fn run_experiment_with(cfg: &ExperimentConfig, extra: &[CustomAgent]) -> Result<RunReport, BenchError> {
    cfg.validate()?;
    let inst = cfg.env.instance.load()?;
    let (train, test) = match cfg.split.stream_fraction {
        Some(f) => stream_split(&inst, f)?,
        None => (inst.clone(), inst.clone()),
    };
    let config = cfg.env.env_config(&test)?;
    let mut roster: Vec<(String, Roster)> = cfg.agents.iter().map(|a| (a.to_string(), Roster::Spec(a))).collect();
    for c in extra {
        if roster.iter().any(|(n, _)| *n == c.name) {
            return Err(invalid(format!("duplicate agent name {}", c.name)));
        }
        roster.push((c.name.clone(), Roster::Custom(c)));
    }
    let plan = Plan {
        train,
        test,
        config,
        train_seeds: cfg.train_seeds(),
        episodes: cfg.split.train_episodes,
        roster,
    };
    let cells: Vec<(usize, u64)> = (0..plan.roster.len())
        .flat_map(|a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let run_all = || -> Vec<CellResult> {
        cells
            .par_iter()
            .map(|&(a, seed)| {
                let name = &plan.roster[a].0;
                match catch_unwind(AssertUnwindSafe(|| plan.cell(a, seed))) {
                    Ok(Ok(row)) => row,
                    Ok(Err(e)) => CellResult::failed(name, seed, e),
                    Err(p) => CellResult::failed(name, seed, format!("panic: {}", panic_message(p))),
                }
            })
            .collect()
    };
    let rows = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BenchError::Pool(e.to_string()))?
            .install(run_all),
        None => run_all(),
    };

    let agents: Vec<String> = plan.roster.iter().map(|(n, _)| n.clone()).collect();
    let baselines: Vec<String> = cfg
        .agents
        .iter()
        .filter(|a| !a.needs_training())
        .map(|a| a.to_string())
        .collect();
    let (summaries, comparisons) = aggregate(&rows, &agents, &baselines, cfg.bootstrap_seed);
    Ok(RunReport {
        config: cfg.clone(),
        versions: ArtifactVersions::default(),
        setup: SetupEcho {
            instance_name: inst.name.clone(),
            triplet: inst.triplet.to_string(),
            objective: cfg.env.objective_for(&inst)?.to_string(),
            n_jobs: inst.n_jobs(),
            n_machines: inst.n_machines(),
            train_jobs: plan.train.n_jobs(),
            test_jobs: plan.test.n_jobs(),
        },
        agents,
        baselines,
        train_seeds: plan.train_seeds.clone(),
        rows,
        summaries,
        comparisons,
    })
}

/// Per-agent statistics over successful rows, and paired sign tests of each
/// agent against each baseline over seeds where both succeeded.
pub fn aggregate(
    rows: &[CellResult],
    agents: &[String],
    baselines: &[String],
    bootstrap_seed: u64,
) -> (Vec<AgentSummary>, Vec<Comparison>) {
    let values = |agent: &str| -> Vec<(u64, f64)> {
        rows.iter()
            .filter(|r| r.agent == agent)
            .filter_map(|r| r.objective.map(|v| (r.seed, v)))
            .collect()
    };
    let summaries = agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let xs: Vec<f64> = values(a).into_iter().map(|(_, v)| v).collect();
            AgentSummary {
                agent: a.clone(),
                failed: rows.iter().filter(|r| r.agent == *a && r.status == CellStatus::Failed).count(),
                stats: summarize(&xs, bootstrap_seed.wrapping_add(i as u64)),
            }
        })
        .collect();
    let mut comparisons = Vec::new();
    for a in agents {
        let mine = values(a);
        for b in baselines.iter().filter(|b| *b != a) {
            let theirs = values(b);
            let pairs: Vec<(f64, f64)> = mine
                .iter()
                .filter_map(|(s, x)| theirs.iter().find(|(t, _)| t == s).map(|(_, y)| (*x, *y)))
                .collect();
            comparisons.push(Comparison {
                agent: a.clone(),
                baseline: b.clone(),
                test: paired_sign_test(&pairs),
            });
        }
    }
    (summaries, comparisons)
}
