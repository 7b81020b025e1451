use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::events::Event;
use super::{Action, DecisionPoint, SimConfig, SimError, SimState, Step};
use crate::instance::Instance;

/// One line of the NDJSON trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    /// Set on actions the engine took itself (rules, plans).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub auto: bool,
    /// Hex digest of the state after the record.
    pub state_hash: String,
}

impl TraceRecord {
    pub fn entry(&self) -> TraceEntry<'_> {
        match (&self.event, &self.decision, &self.action) {
            (Some(e), _, _) => TraceEntry::Event(e),
            (_, Some(d), _) => TraceEntry::Decision(d),
            (_, _, Some(a)) => TraceEntry::Action { action: a, auto: self.auto },
            _ => TraceEntry::Empty,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TraceEntry<'a> {
    Event(&'a Event),
    Decision(&'a DecisionPoint),
    Action { action: &'a Action, auto: bool },
    Empty,
}

/// Append-only transition log. The running hash covers every line even when
/// the lines themselves are not kept.
#[derive(Clone, Debug)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// Actions chosen by the agent, in order.
    pub actions: Vec<Action>,
    pub len: u64,
    hash: u64,
}

impl Default for Trace {
    fn default() -> Self {
        Trace {
            records: Vec::new(),
            actions: Vec::new(),
            len: 0,
            hash: FnvHasher::default().finish(),
        }
    }
}

impl PartialEq for Trace {
    fn eq(&self, other: &Self) -> bool {
        self.hash() == other.hash() && self.len == other.len && self.records == other.records
    }
}

impl Trace {
    pub(crate) fn push(&mut self, record: TraceRecord, keep: bool) {
        let line = serde_json::to_string(&record).expect("trace record serializes");
        let mut h = FnvHasher::with_key(self.hash);
        h.write(line.as_bytes());
        h.write(b"\n");
        self.hash = h.finish();
        self.len += 1;
        if keep {
            self.records.push(record);
        }
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Hash of an NDJSON trace file, computed exactly as the engine does.
pub fn ndjson_hash(text: &str) -> u64 {
    let mut h = FnvHasher::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        h.write(line.as_bytes());
        h.write(b"\n");
    }
    h.finish()
}

pub fn parse_ndjson(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Agent actions recorded in a trace (auto actions excluded).
pub fn agent_actions(records: &[TraceRecord]) -> Vec<Action> {
    records
        .iter()
        .filter(|r| !r.auto)
        .filter_map(|r| r.action.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("replay diverged at action {step}: {action} is not legal")]
    Divergence { step: usize, action: Action },
    #[error("action log ended after {step} actions before the episode finished")]
    Exhausted { step: usize },
    #[error("{extra} unused actions left after the episode finished")]
    Leftover { extra: usize },
}

/// Re-run an episode from its action log.
pub fn replay(
    inst: &Instance,
    seed: u64,
    horizon: Option<f64>,
    config: SimConfig,
    actions: &[Action],
) -> Result<Trace, ReplayError> {
    let mut sim = SimState::init(inst, seed, horizon, config)?;
    let mut used = 0;
    loop {
        match sim.advance()? {
            Step::Terminal(_) => break,
            Step::Decision(dp) => {
                let Some(a) = actions.get(used) else {
                    return Err(ReplayError::Exhausted { step: used });
                };
                if !dp.is_legal(a) {
                    return Err(ReplayError::Divergence {
                        step: used,
                        action: a.clone(),
                    });
                }
                sim.apply(a)?;
                used += 1;
            }
        }
    }
    if used < actions.len() {
        return Err(ReplayError::Leftover {
            extra: actions.len() - used,
        });
    }
    Ok(sim.trace)
}
