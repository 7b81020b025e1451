use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Agent, AgentError};
use crate::mdp::{compute_features, decode_action, ActionSpec, Env, EnvAction, FeatureId};
use crate::rng::{RngStream, AGENT};
use crate::rules::SequencingRule;
use crate::simcore::{Action, DecisionKind, DecisionPoint, SimState};

pub const QTABLE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    QLearning,
    Sarsa,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::QLearning => "ql",
            Method::Sarsa => "sarsa",
        }
    }
}

/// Linear decay from `start` to `end` over the first `decay_fraction` of
/// the episodes, then constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            decay_fraction: 0.8,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        EpsilonSchedule {
            start: eps,
            end: eps,
            decay_fraction: 0.0,
        }
    }

    pub fn at(&self, episode: usize, episodes: usize) -> f64 {
        let span = self.decay_fraction * episodes as f64;
        if span <= 0.0 || episode as f64 >= span {
            return self.end;
        }
        self.start + (self.end - self.start) * episode as f64 / span
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// Learning rate.
    pub alpha: f64,
    /// Discount.
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    /// Initial value of unseen entries.
    #[serde(default)]
    pub init: f64,
    /// States beyond this many are not stored (and read as `init`).
    pub max_states: usize,
    /// Take a uniformly random first action in every episode.
    #[serde(default)]
    pub exploring_starts: bool,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            alpha: 0.1,
            gamma: 1.0,
            epsilon: EpsilonSchedule::default(),
            init: 0.0,
            max_states: 100_000,
            exploring_starts: false,
        }
    }
}

impl Hyper {
    /// Named presets for agent selectors such as `ql:default`.
    pub fn preset(name: &str) -> Option<Hyper> {
        match name {
            "default" => Some(Hyper::default()),
            "fast" => Some(Hyper {
                alpha: 0.2,
                epsilon: EpsilonSchedule {
                    decay_fraction: 0.5,
                    ..EpsilonSchedule::default()
                },
                ..Hyper::default()
            }),
            _ => None,
        }
    }

    pub fn check(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Hyperparameters(m.into()));
        let e = &self.epsilon;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if ![e.start, e.end, e.decay_fraction].iter().all(|x| (0.0..=1.0).contains(x)) {
            return bad("epsilon schedule values must lie in [0, 1]");
        }
        if !self.init.is_finite() {
            return bad("init must be finite");
        }
        Ok(())
    }
}

/// How a simulation state is reduced to a table key.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateKeySpec {
    /// Decision kind and resource, number of options bucketed to
    /// {0, 1, 2, 3+}, and the quartile of remaining nominal work.
    #[default]
    Default,
    /// Each feature value bucketed by the ascending `edges` (value `< e[0]`
    /// is bucket 0, and so on).
    Features { features: Vec<FeatureId>, edges: Vec<f64> },
}

fn bucket(x: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|&&e| x >= e).count()
}

impl StateKeySpec {
    pub fn key(&self, state: &SimState, dp: &DecisionPoint) -> Result<String, AgentError> {
        let tag = match dp.kind {
            DecisionKind::Sequencing { machine } => format!("s{machine}"),
            DecisionKind::Routing { .. } => "r".into(),
            DecisionKind::TransportSource { vehicle } => format!("p{vehicle}"),
            DecisionKind::TransportDestination { vehicle, .. } => format!("d{vehicle}"),
            DecisionKind::Reschedule { .. } => "x".into(),
        };
        match self {
            StateKeySpec::Default => {
                let options = dp.legal_actions.iter().filter(|a| **a != Action::Wait).count().min(3);
                let inst = state.instance();
                let mut total = 0.0;
                let mut left = 0.0;
                for (j, job) in inst.jobs.iter().enumerate() {
                    for (k, op) in job.operations.iter().enumerate() {
                        total += op.duration;
                        left += state.remaining_op_time(j, k).min(op.duration);
                    }
                }
                let q = if total > 0.0 {
                    ((4.0 * left / total) as usize).min(3)
                } else {
                    0
                };
                Ok(format!("{tag}|b{options}|q{q}"))
            }
            StateKeySpec::Features { features, edges } => {
                let values = compute_features(state, features)?;
                let parts: Vec<String> = values.iter().map(|&v| bucket(v, edges).to_string()).collect();
                Ok(format!("{tag}|{}", parts.join(",")))
            }
        }
    }
}

/// Learned action values keyed by discretized state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub version: u32,
    pub method: Method,
    pub n_actions: usize,
    pub hyper: Hyper,
    pub key: StateKeySpec,
    pub values: BTreeMap<String, Vec<f64>>,
    pub visits: BTreeMap<String, Vec<u64>>,
    pub episodes: usize,
    /// Distinct states not stored because the table was full.
    pub dropped_states: usize,
}

impl QTable {
    pub fn new(method: Method, n_actions: usize, hyper: Hyper, key: StateKeySpec) -> Self {
        QTable {
            version: QTABLE_VERSION,
            method,
            n_actions,
            hyper,
            key,
            values: BTreeMap::new(),
            visits: BTreeMap::new(),
            episodes: 0,
            dropped_states: 0,
        }
    }

    pub fn value(&self, key: &str, a: usize) -> f64 {
        self.values.get(key).map_or(self.hyper.init, |row| row[a])
    }

    /// Highest-valued action among `legal`, lowest index on ties.
    pub fn greedy(&self, key: &str, legal: &[usize]) -> usize {
        let mut best = legal[0];
        for &a in &legal[1..] {
            if self.value(key, a) > self.value(key, best) {
                best = a;
            }
        }
        best
    }

    fn max_value(&self, key: &str, legal: &[usize]) -> f64 {
        legal
            .iter()
            .map(|&a| self.value(key, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn update(&mut self, key: &str, a: usize, target: f64) {
        if !self.values.contains_key(key) {
            if self.values.len() >= self.hyper.max_states {
                self.dropped_states += 1;
                return;
            }
            self.values.insert(key.to_string(), vec![self.hyper.init; self.n_actions]);
            self.visits.insert(key.to_string(), vec![0; self.n_actions]);
        }
        let q = &mut self.values.get_mut(key).expect("inserted")[a];
        *q += self.hyper.alpha * (target - *q);
        self.visits.get_mut(key).expect("inserted")[a] += 1;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("a q-table always serializes")
    }

    pub fn from_json(text: &str) -> Result<QTable, AgentError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| AgentError::TableFormat(e.to_string()))?;
        let found = v.get("version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
        if found != QTABLE_VERSION {
            return Err(AgentError::TableVersion {
                found,
                expected: QTABLE_VERSION,
            });
        }
        serde_json::from_value(v).map_err(|e| AgentError::TableFormat(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabStep {
    pub key: String,
    /// Legal action indices; nonempty unless `done`.
    pub legal: Vec<usize>,
    pub reward: f64,
    /// Terminal: no bootstrapping past this state.
    pub done: bool,
    /// Episode cut short: bootstrap but stop.
    pub truncated: bool,
}

/// Finite-action episodic environment for the tabular learners.
pub trait TabularEnv {
    fn n_actions(&self) -> usize;
    fn reset(&mut self, episode: usize) -> Result<TabStep, AgentError>;
    fn step(&mut self, action: usize) -> Result<TabStep, AgentError>;
}

/// Two states, two actions (0 stays, 1 switches). Staying in state 1 pays 1,
/// everything else pays 0. Episodes start alternately in each state and are
/// truncated after `horizon` steps.
#[derive(Clone, Debug)]
pub struct ChainMdp {
    pub horizon: usize,
    state: usize,
    t: usize,
}

impl ChainMdp {
    pub fn new(horizon: usize) -> Self {
        ChainMdp {
            horizon,
            state: 0,
            t: 0,
        }
    }

    /// `(next state, reward)`.
    pub fn transition(s: usize, a: usize) -> (usize, f64) {
        match (s, a) {
            (1, 0) => (1, 1.0),
            (s, 0) => (s, 0.0),
            (s, _) => (1 - s, 0.0),
        }
    }

    fn observe(&self, reward: f64) -> TabStep {
        TabStep {
            key: format!("s{}", self.state),
            legal: vec![0, 1],
            reward,
            done: false,
            truncated: self.t >= self.horizon,
        }
    }
}

impl TabularEnv for ChainMdp {
    fn n_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, episode: usize) -> Result<TabStep, AgentError> {
        self.state = episode % 2;
        self.t = 0;
        Ok(self.observe(0.0))
    }

    fn step(&mut self, action: usize) -> Result<TabStep, AgentError> {
        let (s, r) = ChainMdp::transition(self.state, action);
        self.state = s;
        self.t += 1;
        Ok(self.observe(r))
    }
}

/// Index of an action in a fixed action space: target ids for direct
/// encoding.
fn direct_index(a: &Action) -> Option<usize> {
    match *a {
        Action::Sequence { job, .. } | Action::Pick { job } => Some(job),
        Action::Route { machine, .. } | Action::Deliver { machine } => Some(machine),
        Action::Reschedule { .. } | Action::Wait => None,
    }
}

/// Legal `(index, action)` pairs for the env's action encoding.
fn indexed_actions(state: &SimState, dp: &DecisionPoint, spec: &ActionSpec) -> Vec<(usize, Action)> {
    match spec {
        ActionSpec::Direct => {
            let mut out: Vec<(usize, Action)> = Vec::new();
            for a in &dp.legal_actions {
                if let Some(i) = direct_index(a) {
                    if !out.iter().any(|(j, _)| *j == i) {
                        out.push((i, a.clone()));
                    }
                }
            }
            out
        }
        ActionSpec::RuleSelect { sequencing, routing } => {
            let n = match dp.kind {
                DecisionKind::Routing { .. } | DecisionKind::TransportDestination { .. } => routing.len(),
                _ => sequencing.len(),
            };
            (0..n)
                .filter_map(|i| decode_action(state, spec, &EnvAction::Rule(i)).map(|a| (i, a)))
                .collect()
        }
        ActionSpec::SolverParams => SequencingRule::ALL
            .iter()
            .enumerate()
            .map(|(i, _)| {
                (
                    i,
                    Action::Reschedule {
                        params: vec![i as f64, 0.0],
                    },
                )
            })
            .collect(),
    }
}

fn action_count(env: &Env) -> usize {
    match &env.config().action {
        ActionSpec::Direct => env.direct_action_count(),
        ActionSpec::RuleSelect { sequencing, routing } => sequencing.len().max(routing.len()),
        ActionSpec::SolverParams => SequencingRule::ALL.len(),
    }
}

/// Tabular view of an [`Env`]. Episode `e` runs with seed `base_seed + e`
/// when `vary_seed` is set, else always with `base_seed`.
pub struct EnvAdapter {
    pub env: Env,
    pub key: StateKeySpec,
    /// Episode `e` runs with `seeds[e % seeds.len()]`.
    pub seeds: Vec<u64>,
    /// Every seed an episode was reset with.
    pub used_seeds: BTreeSet<u64>,
    options: Vec<(usize, Action)>,
}

impl EnvAdapter {
    pub fn new(env: Env, key: StateKeySpec, seeds: Vec<u64>) -> Self {
        assert!(!seeds.is_empty(), "at least one training seed");
        EnvAdapter {
            env,
            key,
            seeds,
            used_seeds: BTreeSet::new(),
            options: Vec::new(),
        }
    }

    fn observe(&mut self, reward: f64, done: bool) -> Result<TabStep, AgentError> {
        if done {
            self.options.clear();
            return Ok(TabStep {
                key: "end".into(),
                legal: vec![],
                reward,
                done: true,
                truncated: false,
            });
        }
        let sim = self.env.state().expect("reset");
        let dp = sim.pending().expect("live episode");
        self.options = indexed_actions(sim, dp, &self.env.config().action);
        Ok(TabStep {
            key: self.key.key(sim, dp)?,
            legal: self.options.iter().map(|o| o.0).collect(),
            reward,
            done: false,
            truncated: false,
        })
    }
}

impl TabularEnv for EnvAdapter {
    fn n_actions(&self) -> usize {
        action_count(&self.env)
    }

    fn reset(&mut self, episode: usize) -> Result<TabStep, AgentError> {
        let seed = self.seeds[episode % self.seeds.len()];
        self.used_seeds.insert(seed);
        self.env.set_seed(seed);
        let r = self.env.reset()?;
        self.observe(r.reward, r.done)
    }

    fn step(&mut self, action: usize) -> Result<TabStep, AgentError> {
        let (_, a) = self
            .options
            .iter()
            .find(|o| o.0 == action)
            .cloned()
            .ok_or_else(|| AgentError::IllegalAction {
                agent: "tabular".into(),
                action: Action::Wait,
            })?;
        let dp = self.env.decision().expect("live episode").clone();
        let ea = match a {
            Action::Reschedule { params } => EnvAction::Params(params),
            a => EnvAction::Legal(dp.legal_actions.iter().position(|x| *x == a).expect("legal")),
        };
        let r = self.env.step(&ea)?;
        self.observe(r.reward, r.done)
    }
}

fn choose(table: &QTable, rng: &mut RngStream, s: &TabStep, eps: f64, explore: bool) -> usize {
    if explore || (eps > 0.0 && rng.next_f64() < eps) {
        s.legal[rng.below(s.legal.len())]
    } else {
        table.greedy(&s.key, &s.legal)
    }
}

fn train<E: TabularEnv>(
    method: Method,
    env: &mut E,
    episodes: usize,
    hyper: &Hyper,
    key: StateKeySpec,
    seed: u64,
) -> Result<QTable, AgentError> {
    hyper.check()?;
    if episodes == 0 {
        return Err(AgentError::Hyperparameters("at least one episode is needed".into()));
    }
    let mut table = QTable::new(method, env.n_actions(), hyper.clone(), key);
    let mut rng = RngStream::new(seed, AGENT);
    for ep in 0..episodes {
        let eps = hyper.epsilon.at(ep, episodes);
        let mut s = env.reset(ep)?;
        if s.done {
            continue;
        }
        let mut a = choose(&table, &mut rng, &s, eps, hyper.exploring_starts);
        loop {
            let next = env.step(a)?;
            // the next action is drawn before the update for both methods, so
            // greedy runs of the two coincide
            let next_a = (!next.done).then(|| choose(&table, &mut rng, &next, eps, false));
            let future = match (next.done, method, next_a) {
                (true, _, _) | (_, _, None) => 0.0,
                (false, Method::QLearning, _) => table.max_value(&next.key, &next.legal),
                (false, Method::Sarsa, Some(na)) => table.value(&next.key, na),
            };
            table.update(&s.key, a, next.reward + hyper.gamma * future);
            if next.done || next.truncated {
                break;
            }
            s = next;
            a = next_a.expect("not done");
        }
        table.episodes += 1;
    }
    Ok(table)
}

/// Off-policy backup `Q(s,a) += α(r + γ max Q(s',·) - Q(s,a))` under an
/// ε-greedy behavior policy.
pub fn q_learning_train<E: TabularEnv>(
    env: &mut E,
    episodes: usize,
    hyper: &Hyper,
    key: StateKeySpec,
    seed: u64,
) -> Result<QTable, AgentError> {
    train(Method::QLearning, env, episodes, hyper, key, seed)
}

/// On-policy backup `Q(s,a) += α(r + γ Q(s',a') - Q(s,a))` with `a'` drawn
/// from the behavior policy.
pub fn sarsa_train<E: TabularEnv>(
    env: &mut E,
    episodes: usize,
    hyper: &Hyper,
    key: StateKeySpec,
    seed: u64,
) -> Result<QTable, AgentError> {
    train(Method::Sarsa, env, episodes, hyper, key, seed)
}

/// Train on an engine environment with the default state key, cycling
/// through `seeds` for the episodes. Returns the table and the seeds used.
pub fn train_on_env(
    method: Method,
    hyper: &Hyper,
    env: Env,
    seeds: Vec<u64>,
    episodes: usize,
    seed: u64,
) -> Result<(QTable, BTreeSet<u64>), AgentError> {
    let mut adapter = EnvAdapter::new(env, StateKeySpec::Default, seeds);
    let table = train(method, &mut adapter, episodes, hyper, StateKeySpec::Default, seed)?;
    Ok((table, adapter.used_seeds))
}

/// Greedy policy over a trained table. Actions are interpreted under
/// `action`, the encoding the table was trained with.
#[derive(Clone, Debug)]
pub struct TabularAgent {
    pub table: QTable,
    pub action: ActionSpec,
    /// Decisions in states never seen in training.
    pub unseen: usize,
}

impl TabularAgent {
    pub fn new(table: QTable, action: ActionSpec) -> Self {
        TabularAgent {
            table,
            action,
            unseen: 0,
        }
    }
}

impl Agent for TabularAgent {
    fn name(&self) -> String {
        self.table.method.name().into()
    }

    fn act(&mut self, state: &SimState, dp: &DecisionPoint) -> Result<Action, AgentError> {
        let key = self.table.key.key(state, dp)?;
        if !self.table.values.contains_key(&key) {
            self.unseen += 1;
        }
        let options = indexed_actions(state, dp, &self.action);
        if options.is_empty() {
            return Err(AgentError::RuleMismatch {
                agent: self.name(),
                decision: format!("{:?}", dp.kind),
            });
        }
        let legal: Vec<usize> = options.iter().map(|o| o.0).collect();
        let best = self.table.greedy(&key, &legal);
        Ok(options.into_iter().find(|o| o.0 == best).expect("listed").1)
    }
}
