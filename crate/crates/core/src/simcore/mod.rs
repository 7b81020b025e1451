//! Deterministic discrete-event engine. All stochastic exogenous events are
//! sampled when a run is initialised; the agent only ever sees
//! [`DecisionPoint`]s and answers with [`Action`]s.

mod check;
mod engine;
mod events;
mod hash;
mod state;
mod trace;


use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::Planner;
use crate::rules::{RoutingRule, SequencingRule};

pub use check::schedule_violations;
pub use events::{sample_exogenous, Event, EventKind, ExoKind, ExogenousEvent};
pub use state::{Activity, JobPhase, SimState};
pub use trace::{agent_actions, ndjson_hash, parse_ndjson, replay, ReplayError, Trace, TraceEntry, TraceRecord};

/// What the agent is asked to decide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionKind {
    Sequencing {
        machine: usize,
    },
    Routing {
        job: usize,
        candidates: Vec<usize>,
    },
    TransportSource {
        vehicle: usize,
    },
    TransportDestination {
        vehicle: usize,
        job: usize,
    },
    Reschedule {
        trigger: Option<ExoKind>,
    },
}

impl DecisionKind {
    /// Resource index reported as `i` in raw observations.
    pub fn resource(&self) -> usize {
        match *self {
            DecisionKind::Sequencing { machine } => machine,
            DecisionKind::Routing { job, .. } => job,
            DecisionKind::TransportSource { vehicle } => vehicle,
            DecisionKind::TransportDestination { vehicle, .. } => vehicle,
            DecisionKind::Reschedule { .. } => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    /// Start operation `op` of `job` on the deciding machine.
    Sequence { job: usize, op: usize },
    /// Send the job's operation `op` to `machine`.
    Route { op: usize, machine: usize },
    /// Dispatch the deciding vehicle to fetch `job`.
    Pick { job: usize },
    /// Deliver the vehicle's load to `machine`.
    Deliver { machine: usize },
    /// Recompute the standing plan with the given solver parameters.
    Reschedule { params: Vec<f64> },
    /// Leave the machine idle until the next event.
    Wait,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Sequence { job, op } => write!(f, "sequence(j{job}, o{op})"),
            Action::Route { op, machine } => write!(f, "route(o{op} -> m{machine})"),
            Action::Pick { job } => write!(f, "pick(j{job})"),
            Action::Deliver { machine } => write!(f, "deliver(m{machine})"),
            Action::Reschedule { params } => write!(f, "reschedule({params:?})"),
            Action::Wait => f.write_str("wait"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub time: f64,
    #[serde(flatten)]
    pub kind: DecisionKind,
    pub legal_actions: Vec<Action>,
}

impl DecisionPoint {
    /// Whether `a` may be applied here. Reschedule decisions accept any
    /// parameter vector.
    pub fn is_legal(&self, a: &Action) -> bool {
        match a {
            Action::Reschedule { .. } => matches!(self.kind, DecisionKind::Reschedule { .. }),
            _ => self.legal_actions.contains(a),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed { time: f64 },
    Deadlock { time: f64, diagnostic: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Decision(DecisionPoint),
    Terminal(Outcome),
}

/// Who answers a class of decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequencingControl {
    Agent,
    Rule(SequencingRule),
    /// Follow the standing plan, FIFO when it has nothing to offer.
    Plan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingControl {
    /// Jobs with several candidate machines wait in a buffer shared by all of
    /// them (or are routed by the rule when transport is modelled).
    Pool(RoutingRule),
    /// The agent routes every operation when the job is released.
    AgentUpfront,
    /// The agent routes a job whenever it has more than one destination.
    AgentInterlaced,
    /// Follow the standing plan, falling back to the rule.
    Plan(RoutingRule),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportControl {
    /// Oldest waiting job first, destination by the rule.
    Auto(RoutingRule),
    Agent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreemptPolicy {
    #[default]
    Resume,
    Restart,
}

#[derive(Clone)]
pub struct SimConfig {
    pub sequencing: SequencingControl,
    pub routing: RoutingControl,
    pub transport: TransportControl,
    /// Emit a reschedule decision at start and after these exogenous events.
    pub reschedule_on: Option<BTreeSet<ExoKind>>,
    pub planner: Option<Arc<dyn Planner>>,
    /// Offer [`Action::Wait`] at sequencing decisions while events are pending.
    pub allow_wait: bool,
    pub preempt: PreemptPolicy,
    /// Let breakdowns interrupt setups (otherwise the setup finishes first).
    pub preempt_setups: bool,
    /// Keep every trace line in memory (the running hash is always kept).
    pub record_trace: bool,
}

impl fmt::Debug for SimConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimConfig")
            .field("sequencing", &self.sequencing)
            .field("routing", &self.routing)
            .field("transport", &self.transport)
            .field("reschedule_on", &self.reschedule_on)
            .field("planner", &self.planner.as_ref().map(|p| p.name()))
            .field("allow_wait", &self.allow_wait)
            .field("preempt", &self.preempt)
            .field("preempt_setups", &self.preempt_setups)
            .field("record_trace", &self.record_trace)
            .finish()
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sequencing: SequencingControl::Agent,
            routing: RoutingControl::Pool(RoutingRule::Sq),
            transport: TransportControl::Auto(RoutingRule::Sq),
            reschedule_on: None,
            planner: None,
            allow_wait: false,
            preempt: PreemptPolicy::Resume,
            preempt_setups: false,
            record_trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("a horizon is required for open-ended stochastic processes")]
    HorizonRequired,
    #[error("constraint {0} is not supported by the simulator")]
    Unsupported(String),
    #[error("instance is invalid: {0}")]
    InvalidInstance(String),
    #[error("illegal action {action}; legal: [{}]", legal.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", "))]
    Illegal { action: Action, legal: Vec<Action> },
    #[error("no decision is pending")]
    NoDecision,
    #[error("episode has ended")]
    Finished,
    #[error("rescheduling requires a planner")]
    MissingPlanner,
}
