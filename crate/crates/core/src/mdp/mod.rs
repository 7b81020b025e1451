//! Agent-facing environments over the simulation engine: the six MDP
//! breakdowns, observation builders, action decoding and reward shaping.

mod observe;
mod serve;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;
use crate::notation::{has_routing_flexibility, ObjectiveSpec};
use crate::objectives::{evaluate_objective, objective_to_date, ObjectiveError};
use crate::plan::{ListScheduler, Planner};
use crate::rules::{RoutingRule, SequencingRule};
use crate::simcore::{
    Action, DecisionKind, DecisionPoint, ExoKind, Outcome, RoutingControl, SequencingControl, SimConfig, SimError,
    SimState, TransportControl,
};

pub use observe::{check_features, compute_features, observe_raw, FeatureId, RawObservation, NONE};
pub use serve::{serve, Request, Response, PROTOCOL_VERSION};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BreakdownKind {
    OperationSequencing,
    RoutingBeforeSequencing,
    InterlacedRoutingSequencing,
    TransportCentricRouting,
    HolisticRoutingSequencing,
    ReScheduling { triggers: BTreeSet<ExoKind> },
}

impl BreakdownKind {
    pub fn name(&self) -> &'static str {
        match self {
            BreakdownKind::OperationSequencing => "operation_sequencing",
            BreakdownKind::RoutingBeforeSequencing => "routing_before_sequencing",
            BreakdownKind::InterlacedRoutingSequencing => "interlaced_routing_sequencing",
            BreakdownKind::TransportCentricRouting => "transport_centric_routing",
            BreakdownKind::HolisticRoutingSequencing => "holistic_routing_sequencing",
            BreakdownKind::ReScheduling { .. } => "re_scheduling",
        }
    }

    /// Re-scheduling on the exogenous event kinds that are random in `inst`;
    /// with none the plan is made once at the start.
    pub fn rescheduling_for(inst: &Instance) -> Self {
        BreakdownKind::ReScheduling {
            triggers: ExoKind::ALL.into_iter().filter(|k| k.is_stochastic_in(inst)).collect(),
        }
    }

    /// Re-scheduling on every exogenous event kind.
    pub fn rescheduling() -> Self {
        BreakdownKind::ReScheduling {
            triggers: BTreeSet::from([
                ExoKind::JobRelease,
                ExoKind::BreakdownStart,
                ExoKind::BreakdownEnd,
                ExoKind::MachineAdded,
            ]),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObsSpec {
    #[serde(default)]
    pub raw: bool,
    #[serde(default)]
    pub features: Vec<FeatureId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpec {
    /// Job id for sequencing and vehicle pickup, machine id for routing and
    /// delivery.
    Direct,
    RuleSelect {
        sequencing: Vec<SequencingRule>,
        routing: Vec<RoutingRule>,
    },
    /// Free parameter vector handed to the planner.
    SolverParams,
}

impl ActionSpec {
    pub fn all_rules() -> Self {
        ActionSpec::RuleSelect {
            sequencing: SequencingRule::ALL.to_vec(),
            routing: RoutingRule::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shaping {
    TerminalObjective,
    DenseDelta,
    QueueLengthProxy,
}

/// Rewards are negative costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub shaping: Shaping,
    pub objective: ObjectiveSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum IllegalPolicy {
    Reject,
    /// Leave the state as is and return `penalty` as the reward.
    MaskAndPenalize { penalty: f64 },
}

/// What the agent sends to [`Env::step`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum EnvAction {
    /// Target id, see [`ActionSpec::Direct`].
    Direct(usize),
    /// Index into the current legal action list.
    Legal(usize),
    /// Index into the configured rule list for the decision kind.
    Rule(usize),
    Params(Vec<f64>),
    Wait,
}

#[derive(Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    pub breakdown: BreakdownKind,
    #[serde(default)]
    pub obs: ObsSpec,
    pub action: ActionSpec,
    pub reward: RewardSpec,
    #[serde(default = "default_illegal")]
    pub illegal: IllegalPolicy,
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Rule the machines follow under transport-centric routing.
    #[serde(default = "default_internal")]
    pub internal_sequencing: SequencingRule,
    /// Rule for routing choices the agent is not asked about.
    #[serde(default = "default_routing")]
    pub default_routing: RoutingRule,
    #[serde(default)]
    pub allow_wait: bool,
    #[serde(skip)]
    pub planner: Option<Arc<dyn Planner>>,
}

impl std::fmt::Debug for EnvConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvConfig")
            .field("breakdown", &self.breakdown)
            .field("obs", &self.obs)
            .field("action", &self.action)
            .field("reward", &self.reward)
            .field("illegal", &self.illegal)
            .field("horizon", &self.horizon)
            .field("planner", &self.planner.as_ref().map(|p| p.name()))
            .finish_non_exhaustive()
    }
}

fn default_illegal() -> IllegalPolicy {
    IllegalPolicy::Reject
}

fn default_internal() -> SequencingRule {
    SequencingRule::Fifo
}

fn default_routing() -> RoutingRule {
    RoutingRule::Sq
}

impl EnvConfig {
    pub fn new(breakdown: BreakdownKind, action: ActionSpec, reward: RewardSpec) -> Self {
        EnvConfig {
            breakdown,
            obs: ObsSpec::default(),
            action,
            reward,
            illegal: IllegalPolicy::Reject,
            horizon: None,
            internal_sequencing: SequencingRule::Fifo,
            default_routing: RoutingRule::Sq,
            allow_wait: false,
            planner: None,
        }
    }

    /// Engine configuration realizing the breakdown.
    pub fn sim_config(&self) -> SimConfig {
        let pool = RoutingControl::Pool(self.default_routing);
        let auto = TransportControl::Auto(self.default_routing);
        let (sequencing, routing, transport) = match &self.breakdown {
            BreakdownKind::OperationSequencing => (SequencingControl::Agent, pool, auto),
            BreakdownKind::RoutingBeforeSequencing => (SequencingControl::Agent, RoutingControl::AgentUpfront, auto),
            BreakdownKind::InterlacedRoutingSequencing => {
                (SequencingControl::Agent, RoutingControl::AgentInterlaced, auto)
            }
            BreakdownKind::TransportCentricRouting => (
                SequencingControl::Rule(self.internal_sequencing),
                pool,
                TransportControl::Agent,
            ),
            BreakdownKind::HolisticRoutingSequencing => (SequencingControl::Agent, pool, TransportControl::Agent),
            BreakdownKind::ReScheduling { .. } => (
                SequencingControl::Plan,
                RoutingControl::Plan(self.default_routing),
                auto,
            ),
        };
        let (reschedule_on, planner) = match &self.breakdown {
            BreakdownKind::ReScheduling { triggers } => (
                Some(triggers.clone()),
                Some(
                    self.planner
                        .clone()
                        .unwrap_or_else(|| Arc::new(ListScheduler::default()) as Arc<dyn Planner>),
                ),
            ),
            _ => (None, None),
        };
        SimConfig {
            sequencing,
            routing,
            transport,
            reschedule_on,
            planner,
            allow_wait: self.allow_wait,
            ..SimConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("{breakdown} breakdown does not fit {triplet}: {reason}")]
    Incompatible {
        breakdown: String,
        triplet: String,
        reason: String,
    },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("feature {feature} is inapplicable: {reason}")]
    FeatureInapplicable { feature: FeatureId, reason: String },
    #[error("action spec: {0}")]
    ActionSpec(String),
    #[error("illegal action {action:?} at {decision:?}; legal: {legal:?}")]
    Illegal {
        action: EnvAction,
        decision: Option<DecisionKind>,
        legal: Vec<Action>,
    },
    #[error("episode is over; call reset")]
    Done,
    #[error("call reset before step")]
    NotReset,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawObservation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub time: f64,
    /// The decision the next action answers, absent once done.
    pub decision: Option<DecisionPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    /// Engine action the last step applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied: Option<Action>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub illegal: bool,
    pub trace_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub legal_actions: Vec<Action>,
    pub info: StepInfo,
}

/// Reward for the transition `prev -> next` when the agent acted at `decision`.
pub fn reward_of(
    prev: &SimState,
    next: &SimState,
    decision: &DecisionKind,
    applied: &Action,
    spec: &RewardSpec,
) -> Result<f64, ObjectiveError> {
    let before = match spec.shaping {
        Shaping::DenseDelta => objective_to_date(&prev.record(), &spec.objective, prev.time())?,
        _ => 0.0,
    };
    reward_after(before, next, decision, applied, spec)
}

fn reward_after(
    before: f64,
    next: &SimState,
    decision: &DecisionKind,
    applied: &Action,
    spec: &RewardSpec,
) -> Result<f64, ObjectiveError> {
    Ok(match spec.shaping {
        Shaping::TerminalObjective => match next.outcome() {
            Some(_) => -final_objective(next, &spec.objective)?,
            None => 0.0,
        },
        Shaping::DenseDelta => -(objective_to_date(&next.record(), &spec.objective, next.time())? - before),
        Shaping::QueueLengthProxy => {
            let machine = match (decision, applied) {
                (DecisionKind::Sequencing { machine }, _) => Some(*machine),
                (_, Action::Route { machine, .. } | Action::Deliver { machine }) => Some(*machine),
                _ => None,
            };
            machine.map_or(0.0, |m| -(next.sequencing_candidates(m).len() as f64))
        }
    })
}

/// Objective of a finished episode; a deadlocked run is scored on what it
/// completed.
pub fn final_objective(state: &SimState, objective: &ObjectiveSpec) -> Result<f64, ObjectiveError> {
    let rec = state.record();
    match state.outcome() {
        Some(Outcome::Completed { time }) => {
            let at = if *time > 0.0 { *time } else { state.time() };
            evaluate_objective(&rec, objective, at)?
                .scalar()
                .ok_or_else(|| ObjectiveError::MetricUnavailable {
                    metric: crate::objectives::MetricId::Makespan,
                    reason: "a pareto objective has no scalar value".into(),
                })
        }
        _ => objective_to_date(&rec, objective, state.time()),
    }
}

/// Check that the breakdown can be realized on the instance.
pub fn check_breakdown(inst: &Instance, breakdown: &BreakdownKind) -> Result<(), MdpError> {
    let t = &inst.triplet;
    let fail = |reason: &str| {
        Err(MdpError::Incompatible {
            breakdown: breakdown.name().into(),
            triplet: t.to_string(),
            reason: reason.into(),
        })
    };
    match breakdown {
        BreakdownKind::TransportCentricRouting | BreakdownKind::HolisticRoutingSequencing
            if t.fleet_size().is_none() =>
        {
            fail("needs a transport fleet tr(n)")
        }
        BreakdownKind::RoutingBeforeSequencing | BreakdownKind::InterlacedRoutingSequencing
            if !has_routing_flexibility(t) =>
        {
            fail("needs a machine setup with routing flexibility")
        }
        _ => Ok(()),
    }
}

/// Engine action for `a` at the decision pending in `sim`, if it decodes to
/// a legal one. Rule actions break ties toward the lowest id.
pub fn decode_action(sim: &SimState, spec: &ActionSpec, a: &EnvAction) -> Option<Action> {
    let dp = sim.pending()?;
    let legal = &dp.legal_actions;
    let found = |pred: &dyn Fn(&Action) -> bool| legal.iter().find(|x| pred(x)).cloned();
    match (a, &dp.kind) {
        (EnvAction::Params(p), DecisionKind::Reschedule { .. }) => Some(Action::Reschedule { params: p.clone() }),
        (EnvAction::Rule(i), DecisionKind::Reschedule { .. }) => {
            let ActionSpec::RuleSelect { sequencing, .. } = spec else { return None };
            let r = sequencing.get(*i)?;
            Some(Action::Reschedule {
                params: vec![r.index() as f64, 0.0],
            })
        }
        (EnvAction::Legal(i), _) => legal.get(*i).cloned(),
        (EnvAction::Wait, _) => found(&|x| *x == Action::Wait),
        (EnvAction::Direct(id), kind) if *spec == ActionSpec::Direct => match kind {
            DecisionKind::Sequencing { .. } => found(&|x| matches!(x, Action::Sequence { job, .. } if job == id)),
            DecisionKind::TransportSource { .. } => found(&|x| matches!(x, Action::Pick { job } if job == id)),
            DecisionKind::Routing { .. } => found(&|x| matches!(x, Action::Route { machine, .. } if machine == id)),
            DecisionKind::TransportDestination { .. } => {
                found(&|x| matches!(x, Action::Deliver { machine } if machine == id))
            }
            DecisionKind::Reschedule { .. } => None,
        },
        (EnvAction::Rule(i), kind) => {
            let ActionSpec::RuleSelect { sequencing, routing } = spec else { return None };
            match kind {
                DecisionKind::Sequencing { machine } => {
                    let rule = sequencing.get(*i)?;
                    let cands: Vec<(usize, usize)> = legal
                        .iter()
                        .filter_map(|x| match x {
                            Action::Sequence { job, op } => Some((*job, *op)),
                            _ => None,
                        })
                        .collect();
                    let (job, op) = cands[rule.choose(sim, Some(*machine), &cands)];
                    Some(Action::Sequence { job, op })
                }
                DecisionKind::TransportSource { .. } => {
                    let rule = sequencing.get(*i)?;
                    let cands: Vec<(usize, usize)> = legal
                        .iter()
                        .filter_map(|x| match x {
                            Action::Pick { job } => {
                                Some((*job, sim.ready_ops(*job).first().copied().unwrap_or(0)))
                            }
                            _ => None,
                        })
                        .collect();
                    let (job, _) = cands[rule.choose(sim, None, &cands)];
                    Some(Action::Pick { job })
                }
                DecisionKind::Routing { job, .. } => {
                    let rule = routing.get(*i)?;
                    let opts: Vec<(usize, usize)> = legal
                        .iter()
                        .filter_map(|x| match x {
                            Action::Route { op, machine } => Some((*op, *machine)),
                            _ => None,
                        })
                        .collect();
                    let (op, machine) = opts[rule.choose(sim, *job, &opts)];
                    Some(Action::Route { op, machine })
                }
                DecisionKind::TransportDestination { job, .. } => {
                    let rule = routing.get(*i)?;
                    let opts: Vec<(usize, usize)> = legal
                        .iter()
                        .filter_map(|x| match x {
                            Action::Deliver { machine } => Some((0, *machine)),
                            _ => None,
                        })
                        .collect();
                    let (_, machine) = opts[rule.choose(sim, *job, &opts)];
                    Some(Action::Deliver { machine })
                }
                DecisionKind::Reschedule { .. } => None,
            }
        }
        _ => None,
    }
}

/// Gym-style environment: one simulation per episode, decisions surfaced per
/// the breakdown.
#[derive(Clone)]
pub struct Env {
    inst: Arc<Instance>,
    config: EnvConfig,
    sim_config: SimConfig,
    seed: u64,
    sim: Option<SimState>,
}

impl std::fmt::Debug for Env {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Env")
            .field("breakdown", &self.config.breakdown)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

pub fn make_env(inst: &Instance, config: EnvConfig, seed: u64) -> Result<Env, MdpError> {
    check_breakdown(inst, &config.breakdown)?;
    match (&config.action, &config.breakdown) {
        (ActionSpec::SolverParams, BreakdownKind::ReScheduling { .. }) => {}
        (ActionSpec::SolverParams, _) => {
            return Err(MdpError::ActionSpec("solver parameters only apply to re-scheduling".into()))
        }
        (ActionSpec::RuleSelect { sequencing, routing }, b) => {
            let needs_routing = matches!(
                b,
                BreakdownKind::RoutingBeforeSequencing
                    | BreakdownKind::InterlacedRoutingSequencing
                    | BreakdownKind::TransportCentricRouting
                    | BreakdownKind::HolisticRoutingSequencing
            );
            let needs_sequencing = !matches!(b, BreakdownKind::RoutingBeforeSequencing) || !sequencing.is_empty();
            if needs_routing && routing.is_empty() {
                return Err(MdpError::ActionSpec("routing rule set is empty".into()));
            }
            if needs_sequencing && sequencing.is_empty() {
                return Err(MdpError::ActionSpec("sequencing rule set is empty".into()));
            }
        }
        (ActionSpec::Direct, BreakdownKind::ReScheduling { .. }) => {
            return Err(MdpError::ActionSpec("re-scheduling takes solver parameters or rules".into()))
        }
        (ActionSpec::Direct, _) => {}
    }
    let sim_config = config.sim_config();
    let probe = SimState::init(inst, seed, config.horizon, sim_config.clone())?;
    check_features(&probe, &config.obs.features)?;
    Ok(Env {
        inst: Arc::new(inst.clone()),
        config,
        sim_config,
        seed,
        sim: None,
    })
}

impl Env {
    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn state(&self) -> Option<&SimState> {
        self.sim.as_ref()
    }

    pub fn decision(&self) -> Option<&DecisionPoint> {
        self.sim.as_ref().and_then(|s| s.pending())
    }

    pub fn is_done(&self) -> bool {
        self.sim.as_ref().is_some_and(|s| s.outcome().is_some())
    }

    /// Fresh episode from the stored seed.
    pub fn reset(&mut self) -> Result<StepResult, MdpError> {
        let mut sim = SimState::init(&self.inst, self.seed, self.config.horizon, self.sim_config.clone())?;
        sim.advance()?;
        self.sim = Some(sim);
        self.result(0.0, None, false)
    }

    fn result(&self, reward: f64, applied: Option<Action>, illegal: bool) -> Result<StepResult, MdpError> {
        let sim = self.sim.as_ref().ok_or(MdpError::NotReset)?;
        let decision = sim.pending().cloned();
        let resource = decision.as_ref().map_or(0, |d| d.kind.resource());
        let obs = Observation {
            raw: self.config.obs.raw.then(|| observe_raw(sim, resource)),
            features: if self.config.obs.features.is_empty() {
                None
            } else {
                Some(compute_features(sim, &self.config.obs.features)?)
            },
        };
        Ok(StepResult {
            obs,
            reward,
            done: sim.outcome().is_some(),
            legal_actions: decision.as_ref().map(|d| d.legal_actions.clone()).unwrap_or_default(),
            info: StepInfo {
                time: sim.time(),
                decision,
                outcome: sim.outcome().cloned(),
                applied,
                illegal,
                trace_hash: sim.trace().hash_hex(),
            },
        })
    }

    /// Engine action for `a` at the pending decision, if it decodes to a
    /// legal one.
    pub fn decode(&self, a: &EnvAction) -> Option<Action> {
        decode_action(self.sim.as_ref()?, &self.config.action, a)
    }

    pub fn step(&mut self, a: &EnvAction) -> Result<StepResult, MdpError> {
        let sim = self.sim.as_ref().ok_or(MdpError::NotReset)?;
        if sim.outcome().is_some() {
            return Err(MdpError::Done);
        }
        let dp = sim.pending().cloned().expect("a live episode always waits on a decision");
        let Some(action) = self.decode(a) else {
            return match self.config.illegal {
                IllegalPolicy::Reject => Err(MdpError::Illegal {
                    action: a.clone(),
                    decision: Some(dp.kind.clone()),
                    legal: dp.legal_actions.clone(),
                }),
                IllegalPolicy::MaskAndPenalize { penalty } => self.result(penalty, None, true),
            };
        };
        let spec = &self.config.reward;
        let sim = self.sim.as_mut().expect("checked");
        let before = match spec.shaping {
            Shaping::DenseDelta => objective_to_date(&sim.record(), &spec.objective, sim.time())?,
            _ => 0.0,
        };
        sim.apply(&action)?;
        sim.advance()?;
        let reward = reward_after(before, sim, &dp.kind, &action, spec)?;
        self.result(reward, Some(action), false)
    }

    /// Final objective of the finished episode.
    pub fn objective(&self) -> Result<f64, MdpError> {
        let sim = self.sim.as_ref().ok_or(MdpError::NotReset)?;
        Ok(final_objective(sim, &self.config.reward.objective)?)
    }

    /// Size of a fixed direct action space: max of jobs and machines.
    pub fn direct_action_count(&self) -> usize {
        self.inst.n_jobs().max(self.inst.n_machines())
    }

    /// Number of rule actions for the current decision kind.
    pub fn rule_count(&self) -> usize {
        let ActionSpec::RuleSelect { sequencing, routing } = &self.config.action else {
            return 0;
        };
        match self.decision().map(|d| &d.kind) {
            Some(DecisionKind::Routing { .. } | DecisionKind::TransportDestination { .. }) => routing.len(),
            _ => sequencing.len(),
        }
    }
}

#[cfg(test)]
mod tests;
