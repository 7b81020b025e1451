use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::instance::Instance;
use crate::mdp::{make_env, Env, EnvAction, EnvConfig, StepResult};
use crate::simcore::Action;

pub const DEFAULT_ORACLE_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Minimum final objective over all reachable action sequences.
    pub best: f64,
    /// An action log reaching `best`.
    pub actions: Vec<Action>,
    /// Decision nodes expanded.
    pub nodes: usize,
}

struct Search {
    memo: HashMap<u64, (f64, usize)>,
    nodes: usize,
    cap: usize,
}

impl Search {
    /// Best final objective below `env`, memoized on the state hash.
    fn best(&mut self, env: &Env, r: &StepResult) -> Result<f64, AgentError> {
        if r.done {
            return Ok(env.objective()?);
        }
        let h = env.state().expect("reset").state_hash();
        if let Some(&(v, _)) = self.memo.get(&h) {
            return Ok(v);
        }
        self.nodes += 1;
        if self.nodes > self.cap {
            return Err(AgentError::CapExceeded(self.cap));
        }
        let mut best = (f64::INFINITY, 0);
        for i in 0..r.legal_actions.len() {
            let mut child = env.clone();
            let cr = child.step(&EnvAction::Legal(i))?;
            let v = self.best(&child, &cr)?;
            if v < best.0 {
                best = (v, i);
            }
        }
        self.memo.insert(h, best);
        Ok(best.0)
    }
}

/// Exact optimum by depth-first enumeration of every action sequence under
/// the breakdown in `config`. Waiting is always allowed so that schedules
/// with deliberate idle time are reached too.
pub fn exhaustive_oracle(inst: &Instance, config: EnvConfig, cap: usize) -> Result<OracleResult, AgentError> {
    if inst.triplet.beta.iter().any(|t| t.is_stochastic())
        || inst.stochastic.release.is_some()
        || inst.stochastic.duration_factor.is_some()
        || !inst.stochastic.breakdowns.is_empty()
        || inst.stochastic.demand.is_some()
    {
        return Err(AgentError::Stochastic);
    }
    let mut config = config;
    config.allow_wait = true;
    config.obs = Default::default();
    let mut env = make_env(inst, config, 0)?;
    let root = env.reset()?;
    let mut search = Search {
        memo: HashMap::new(),
        nodes: 0,
        cap,
    };
    let best = search.best(&env, &root)?;

    let mut actions = Vec::new();
    let mut r = root;
    while !r.done {
        let h = env.state().expect("reset").state_hash();
        let (_, i) = search.memo[&h];
        actions.push(r.legal_actions[i].clone());
        r = env.step(&EnvAction::Legal(i))?;
    }
    Ok(OracleResult {
        best,
        actions,
        nodes: search.nodes,
    })
}
