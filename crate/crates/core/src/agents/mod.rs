//! Baseline agents: priority rules, uniform random, plan-following, tabular
//! Q-learning and SARSA, and an exhaustive search oracle for tiny instances.

mod oracle;
mod tabular;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;
use crate::mdp::{decode_action, ActionSpec, BreakdownKind, EnvAction, EnvConfig, Env, MdpError};
use crate::rng::{RngStream, AGENT};
use crate::rules::{RoutingRule, SequencingRule, UnknownRule};
use crate::simcore::{Action, DecisionKind, DecisionPoint, Outcome, SimState};

pub use oracle::{exhaustive_oracle, OracleResult, DEFAULT_ORACLE_CAP};
pub use tabular::{
    q_learning_train, sarsa_train, train_on_env, ChainMdp, EnvAdapter, EpsilonSchedule, Hyper, Method, QTable, StateKeySpec,
    TabStep, TabularAgent, TabularEnv, QTABLE_VERSION,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("{agent} has no rule for {decision} decisions")]
    RuleMismatch { agent: String, decision: String },
    #[error("{agent} chose {action}, which is not legal here")]
    IllegalAction { agent: String, action: Action },
    #[error("unknown agent {0:?}")]
    UnknownSpec(String),
    #[error("search explored more than {0} nodes")]
    CapExceeded(usize),
    #[error("the oracle needs a deterministic instance")]
    Stochastic,
    #[error("invalid hyperparameters: {0}")]
    Hyperparameters(String),
    #[error("q-table has version {found}, expected {expected}")]
    TableVersion { found: u32, expected: u32 },
    #[error("q-table: {0}")]
    TableFormat(String),
    #[error(transparent)]
    Env(#[from] MdpError),
}

/// A decision maker. Agents see the full simulation state at each decision;
/// observation vectors are derived from it by the env.
pub trait Agent: Send {
    fn name(&self) -> String;

    /// Called before each episode with the episode seed.
    fn reset(&mut self, _seed: u64) {}

    /// Pick one of `dp.legal_actions`, or a parameter vector at a reschedule
    /// decision.
    fn act(&mut self, state: &SimState, dp: &DecisionPoint) -> Result<Action, AgentError>;

    /// Env configuration the agent runs under, derived from the experiment's.
    fn env_config(&self, base: &EnvConfig, _inst: &Instance) -> EnvConfig {
        base.clone()
    }
}

fn kind_name(kind: &DecisionKind) -> &'static str {
    match kind {
        DecisionKind::Sequencing { .. } => "sequencing",
        DecisionKind::Routing { .. } => "routing",
        DecisionKind::TransportSource { .. } => "transport-source",
        DecisionKind::TransportDestination { .. } => "transport-destination",
        DecisionKind::Reschedule { .. } => "reschedule",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorityRule {
    Sequencing(SequencingRule),
    Routing(RoutingRule),
}

impl FromStr for PriorityRule {
    type Err = UnknownRule;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse()
            .map(PriorityRule::Sequencing)
            .or_else(|_| s.parse().map(PriorityRule::Routing))
    }
}

impl fmt::Display for PriorityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorityRule::Sequencing(r) => r.fmt(f),
            PriorityRule::Routing(r) => r.fmt(f),
        }
    }
}

/// Stateless dispatcher. Sequencing rules also order vehicle pickups and
/// pick the list-scheduling rule at reschedule decisions; routing rules
/// choose machines and delivery targets.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleAgent {
    pub sequencing: Option<SequencingRule>,
    pub routing: Option<RoutingRule>,
}

pub fn rule_agent(rule: PriorityRule) -> RuleAgent {
    match rule {
        PriorityRule::Sequencing(r) => RuleAgent {
            sequencing: Some(r),
            routing: None,
        },
        PriorityRule::Routing(r) => RuleAgent {
            sequencing: None,
            routing: Some(r),
        },
    }
}

impl RuleAgent {
    pub fn new(sequencing: SequencingRule, routing: RoutingRule) -> Self {
        RuleAgent {
            sequencing: Some(sequencing),
            routing: Some(routing),
        }
    }
}

impl Agent for RuleAgent {
    fn name(&self) -> String {
        match (self.sequencing, self.routing) {
            (Some(s), Some(r)) => format!("rule:{s}+{r}"),
            (Some(s), None) => format!("rule:{s}"),
            (None, Some(r)) => format!("rule:{r}"),
            (None, None) => "rule:none".into(),
        }
    }

    fn act(&mut self, state: &SimState, dp: &DecisionPoint) -> Result<Action, AgentError> {
        let spec = ActionSpec::RuleSelect {
            sequencing: self.sequencing.into_iter().collect(),
            routing: self.routing.into_iter().collect(),
        };
        debug_assert_eq!(state.pending(), Some(dp));
        decode_action(state, &spec, &EnvAction::Rule(0)).ok_or_else(|| AgentError::RuleMismatch {
            agent: self.name(),
            decision: kind_name(&dp.kind).into(),
        })
    }
}

/// Uniform over the legal actions, from the agent's own stream.
#[derive(Clone, Debug)]
pub struct RandomAgent {
    rng: RngStream,
}

pub fn random_agent(seed: u64) -> RandomAgent {
    RandomAgent {
        rng: RngStream::new(seed, AGENT),
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> String {
        "random".into()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = RngStream::new(seed, AGENT);
    }

    fn act(&mut self, _state: &SimState, dp: &DecisionPoint) -> Result<Action, AgentError> {
        if let DecisionKind::Reschedule { .. } = dp.kind {
            let r = self.rng.below(SequencingRule::ALL.len());
            return Ok(Action::Reschedule {
                params: vec![r as f64, 0.0],
            });
        }
        Ok(dp.legal_actions[self.rng.below(dp.legal_actions.len())].clone())
    }
}

/// Follows a list-scheduled plan built on expected durations. The static
/// variant plans once; the recompute variant replans after every random
/// exogenous event.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanAgent {
    pub rule: SequencingRule,
    pub recompute: bool,
}

pub fn static_plan_agent(rule: SequencingRule) -> PlanAgent {
    PlanAgent { rule, recompute: false }
}

pub fn recompute_agent(rule: SequencingRule) -> PlanAgent {
    PlanAgent { rule, recompute: true }
}

impl Agent for PlanAgent {
    fn name(&self) -> String {
        let kind = if self.recompute { "recompute" } else { "static" };
        format!("{kind}:{}", self.rule)
    }

    fn act(&mut self, state: &SimState, dp: &DecisionPoint) -> Result<Action, AgentError> {
        match dp.kind {
            DecisionKind::Reschedule { .. } => Ok(Action::Reschedule {
                params: vec![self.rule.index() as f64, 0.0],
            }),
            // decisions the plan does not cover (e.g. vehicles) go to the rule
            _ => RuleAgent::new(self.rule, RoutingRule::Sq).act(state, dp),
        }
    }

    fn env_config(&self, base: &EnvConfig, inst: &Instance) -> EnvConfig {
        let mut config = base.clone();
        config.breakdown = if self.recompute {
            BreakdownKind::rescheduling_for(inst)
        } else {
            BreakdownKind::ReScheduling {
                triggers: Default::default(),
            }
        };
        config.action = ActionSpec::SolverParams;
        config.planner = None;
        config
    }
}

/// Textual agent selector, e.g. `rule:SPT`, `rule:SPT+SQ`, `random`,
/// `static:EDD`, `recompute:SPT`, `ql:default`, `sarsa:default`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentSpec {
    Rule {
        sequencing: Option<SequencingRule>,
        routing: Option<RoutingRule>,
    },
    Random,
    Static(SequencingRule),
    Recompute(SequencingRule),
    Tabular { method: Method, preset: String },
}

impl AgentSpec {
    /// Whether building the agent needs a training phase.
    pub fn needs_training(&self) -> bool {
        matches!(self, AgentSpec::Tabular { .. })
    }

    /// Agents that need no training, built directly. `seed` seeds random
    /// agents.
    pub fn build(&self, seed: u64) -> Option<Box<dyn Agent>> {
        Some(match self {
            AgentSpec::Rule { sequencing, routing } => Box::new(RuleAgent {
                sequencing: *sequencing,
                routing: *routing,
            }),
            AgentSpec::Random => Box::new(random_agent(seed)),
            AgentSpec::Static(r) => Box::new(static_plan_agent(*r)),
            AgentSpec::Recompute(r) => Box::new(recompute_agent(*r)),
            AgentSpec::Tabular { .. } => return None,
        })
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Rule { sequencing, routing } => {
                let parts: Vec<String> = sequencing
                    .map(|r| r.to_string())
                    .into_iter()
                    .chain(routing.map(|r| r.to_string()))
                    .collect();
                write!(f, "rule:{}", parts.join("+"))
            }
            AgentSpec::Random => f.write_str("random"),
            AgentSpec::Static(r) => write!(f, "static:{r}"),
            AgentSpec::Recompute(r) => write!(f, "recompute:{r}"),
            AgentSpec::Tabular { method, preset } => write!(f, "{}:{preset}", method.name()),
        }
    }
}

impl FromStr for AgentSpec {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AgentError::UnknownSpec(s.to_string());
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        match (kind, arg) {
            ("random", None) => Ok(AgentSpec::Random),
            ("rule", Some(a)) => {
                let mut sequencing = None;
                let mut routing = None;
                for part in a.split('+') {
                    match part.parse().map_err(|_| bad())? {
                        PriorityRule::Sequencing(r) if sequencing.is_none() => sequencing = Some(r),
                        PriorityRule::Routing(r) if routing.is_none() => routing = Some(r),
                        _ => return Err(bad()),
                    }
                }
                Ok(AgentSpec::Rule { sequencing, routing })
            }
            ("static", Some(a)) => Ok(AgentSpec::Static(a.parse().map_err(|_| bad())?)),
            ("recompute", Some(a)) => Ok(AgentSpec::Recompute(a.parse().map_err(|_| bad())?)),
            ("ql" | "sarsa", a) if Hyper::preset(a.unwrap_or("default")).is_some() => Ok(AgentSpec::Tabular {
                method: if kind == "ql" { Method::QLearning } else { Method::Sarsa },
                preset: a.unwrap_or("default").to_string(),
            }),
            _ => Err(bad()),
        }
    }
}

impl Serialize for AgentSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Summary of one finished episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub outcome: Outcome,
    pub objective: f64,
    pub total_reward: f64,
    pub steps: usize,
    pub trace_hash: String,
    pub actions: Vec<Action>,
    pub replans: usize,
    pub plan_fallbacks: usize,
}

/// Run one episode of `agent` on `env` from the env's seed.
pub fn run_episode(env: &mut Env, agent: &mut dyn Agent) -> Result<Episode, AgentError> {
    agent.reset(env.seed());
    let mut r = env.reset()?;
    let mut total = 0.0;
    let mut actions = Vec::new();
    while !r.done {
        let sim = env.state().expect("reset");
        let dp = sim.pending().expect("live episode");
        let a = agent.act(sim, dp)?;
        let ea = match &a {
            Action::Reschedule { params } if matches!(dp.kind, DecisionKind::Reschedule { .. }) => {
                EnvAction::Params(params.clone())
            }
            _ => match dp.legal_actions.iter().position(|x| *x == a) {
                Some(i) => EnvAction::Legal(i),
                None => {
                    return Err(AgentError::IllegalAction {
                        agent: agent.name(),
                        action: a,
                    })
                }
            },
        };
        r = env.step(&ea)?;
        total += r.reward;
        actions.push(a);
    }
    let sim = env.state().expect("reset");
    Ok(Episode {
        outcome: sim.outcome().cloned().expect("done"),
        objective: env.objective()?,
        total_reward: total,
        steps: actions.len(),
        trace_hash: r.info.trace_hash,
        actions,
        replans: sim.replans(),
        plan_fallbacks: sim.plan_fallbacks(),
    })
}
