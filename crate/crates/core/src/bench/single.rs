use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_file, read, BenchError, EnvSetup, DEFAULT_TRAIN_EPISODES, DEFAULT_TRAIN_SEEDS};
use crate::agents::{run_episode, train_on_env, Agent, AgentSpec, Hyper, QTable, TabularAgent};
use crate::mdp::make_env;
use crate::simcore::{agent_actions, ndjson_hash, parse_ndjson, replay, Action, Outcome};

/// One episode of one agent; also the config a trace is replayed against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    #[serde(flatten)]
    pub env: EnvSetup,
    pub agent: AgentSpec,
    pub seed: u64,
    /// Trained table for `ql`/`sarsa` agents. Without it the agent is trained
    /// on the seeds following `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qtable: Option<PathBuf>,
}

impl EpisodeConfig {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let mut cfg: EpisodeConfig = load_file(path)?;
        if let Some(dir) = path.parent() {
            cfg.env.instance.rebase(dir);
            if let Some(q) = &mut cfg.qtable {
                if q.is_relative() {
                    *q = dir.join(&*q);
                }
            }
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleRun {
    pub agent: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub objective: f64,
    pub total_reward: f64,
    pub steps: usize,
    pub trace_hash: String,
    pub actions: Vec<Action>,
    /// Full NDJSON trace.
    #[serde(skip)]
    pub trace: String,
}

pub fn run_single(cfg: &EpisodeConfig) -> Result<SingleRun, BenchError> {
    let inst = cfg.env.instance.load()?;
    let base = cfg.env.env_config(&inst)?;
    let mut agent: Box<dyn Agent> = match &cfg.agent {
        AgentSpec::Tabular { method, preset } => {
            let table = match &cfg.qtable {
                Some(path) => QTable::from_json(&read(path)?)?,
                None => {
                    let hyper = Hyper::preset(preset).expect("validated preset");
                    let seeds: Vec<u64> = (1..=DEFAULT_TRAIN_SEEDS as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
                    let env = make_env(&inst, base.clone(), seeds[0])?;
                    train_on_env(*method, &hyper, env, seeds, DEFAULT_TRAIN_EPISODES, cfg.seed)?.0
                }
            };
            Box::new(TabularAgent::new(table, base.action.clone()))
        }
        spec => spec.build(cfg.seed).expect("untrained agent"),
    };
    let config = agent.env_config(&base, &inst);
    let mut env = make_env(&inst, config, cfg.seed)?;
    let ep = run_episode(&mut env, agent.as_mut())?;
    Ok(SingleRun {
        agent: cfg.agent.to_string(),
        seed: cfg.seed,
        outcome: ep.outcome,
        objective: ep.objective,
        total_reward: ep.total_reward,
        steps: ep.steps,
        trace_hash: ep.trace_hash,
        actions: ep.actions,
        trace: env.state().expect("ran").trace().to_ndjson(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceCheck {
    /// Hash of the trace file as given.
    pub file_hash: String,
    /// Hash of the episode regenerated from the file's action log.
    pub replay_hash: String,
    pub actions: usize,
    pub matches: bool,
}

/// Replay the agent actions recorded in `trace` under `cfg` and compare the
/// regenerated trace with the file.
pub fn verify_trace(cfg: &EpisodeConfig, trace: &str) -> Result<TraceCheck, BenchError> {
    let records = parse_ndjson(trace).map_err(|e| BenchError::Parse {
        path: PathBuf::from("<trace>"),
        message: e.to_string(),
    })?;
    let actions = agent_actions(&records);
    let inst = cfg.env.instance.load()?;
    let base = cfg.env.env_config(&inst)?;
    // the agent only shapes the config (plan-based agents); its choices
    // come from the log
    let config = match cfg.agent.build(cfg.seed) {
        Some(agent) => agent.env_config(&base, &inst),
        None => base,
    };
    let replayed = replay(&inst, cfg.seed, config.horizon, config.sim_config(), &actions)?;
    let file_hash = format!("{:016x}", ndjson_hash(trace));
    Ok(TraceCheck {
        matches: file_hash == replayed.hash_hex(),
        file_hash,
        replay_hash: replayed.hash_hex(),
        actions: actions.len(),
    })
}
