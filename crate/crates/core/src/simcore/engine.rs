use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::events::{exo_event, sample_exogenous, Event, EventKey, EventKind, ExoKind};
use super::state::{JobState, MachineState, Suspended, VehicleState, VehicleTask, Work};
use super::trace::{Trace, TraceRecord};
use super::{
    Action, DecisionKind, DecisionPoint, JobPhase, Outcome, PreemptPolicy, RoutingControl, SequencingControl,
    SimConfig, SimError, SimState, Step, TransportControl,
};
use crate::instance::{validate_instance, BatchSpec, Instance, TransportMode};
use crate::notation::ConstraintTag;
use crate::objectives::{BusySegment, Interval, JobRecord, MachineRecord, OpRecord, ScheduleRecord, VehicleRecord};
use crate::rng::{RngStream, DURATIONS};
use crate::rules::{RoutingRule, SequencingRule};

enum Found {
    Agent(DecisionPoint),
    Auto(DecisionPoint, Action),
}

fn push_step(steps: &mut Vec<(f64, usize)>, t: f64, level: usize) {
    match steps.last_mut() {
        Some(last) if last.0 == t => last.1 = level,
        Some(last) if last.1 == level => {}
        _ => steps.push((t, level)),
    }
}

impl SimState {
    /// Start a run: validate, pre-sample every exogenous event and duration
    /// deviation, and queue the exogenous events.
    pub fn init(inst: &Instance, seed: u64, horizon: Option<f64>, config: SimConfig) -> Result<SimState, SimError> {
        for tag in [ConstraintTag::Prmp, ConstraintTag::Nwt] {
            if inst.triplet.has(tag) {
                return Err(SimError::Unsupported(tag.token()));
            }
        }
        let violations = validate_instance(inst);
        if !violations.is_empty() {
            let codes: Vec<&str> = violations.iter().map(|v| v.code.as_str()).collect();
            return Err(SimError::InvalidInstance(codes.join(", ")));
        }
        if config.reschedule_on.is_some() && config.planner.is_none() {
            return Err(SimError::MissingPlanner);
        }
        let exo = sample_exogenous(inst, seed, horizon)?;

        let mut rng = RngStream::new(seed, DURATIONS);
        let multipliers: Vec<Vec<f64>> = inst
            .jobs
            .iter()
            .map(|j| {
                j.operations
                    .iter()
                    .map(|_| match &inst.stochastic.duration_factor {
                        Some(d) => d.sample(&mut rng).max(f64::MIN_POSITIVE),
                        None => 1.0,
                    })
                    .collect()
            })
            .collect();

        let mut queue = BTreeMap::new();
        for (i, e) in exo.iter().enumerate() {
            let ev = exo_event(e.kind, e.payload, i);
            queue.insert(ev.key(e.time, i as u64), ev);
        }

        let jobs = inst
            .jobs
            .iter()
            .enumerate()
            .map(|(j, job)| {
                let n = job.operations.len();
                JobState {
                    phase: JobPhase::NotReleased,
                    done: vec![false; n],
                    started: vec![false; n],
                    route: (0..n)
                        .map(|k| match inst.eligible_machines(j, k)[..] {
                            [only] => Some(only),
                            _ => None,
                        })
                        .collect(),
                    dest: None,
                    since: 0.0,
                    vehicle: None,
                }
            })
            .collect();
        let machines = inst
            .machines
            .iter()
            .map(|m| MachineState {
                available: m.available_from <= 0.0,
                work: Work::Idle,
                down_depth: 0,
                pending_down: false,
                suspended: None,
                waiting: false,
                input: Vec::new(),
                reserved: 0,
                outbuf: Vec::new(),
                held: Vec::new(),
                last_job: None,
                down_since: None,
            })
            .collect();
        let vehicles = (0..inst.transport.fleet_size())
            .map(|v| VehicleState {
                at: inst.transport.home.get(v).copied().unwrap_or(inst.depot()),
                task: VehicleTask::Idle,
                waiting: false,
                loaded_since: None,
            })
            .collect();
        let record = ScheduleRecord {
            horizon: 0.0,
            jobs: inst
                .jobs
                .iter()
                .map(|j| JobRecord {
                    release: j.release,
                    due: j.due,
                    completion: None,
                    ops: vec![OpRecord::default(); j.operations.len()],
                })
                .collect(),
            machines: inst
                .machines
                .iter()
                .map(|_| MachineRecord {
                    buffer: vec![(0.0, 0)],
                    ..Default::default()
                })
                .collect(),
            vehicles: vec![VehicleRecord::default(); inst.transport.fleet_size()],
            sink: vec![(0.0, 0)],
        };
        let reschedule_due = config.reschedule_on.as_ref().map(|_| None);
        Ok(SimState {
            inst: Arc::new(inst.clone()),
            config,
            seed,
            horizon,
            t: 0.0,
            next_seq: exo.len() as u64,
            exo,
            fired: Vec::new(),
            queue,
            multipliers,
            jobs,
            machines,
            vehicles,
            pool: BTreeSet::new(),
            permutation: Vec::new(),
            sink: 0,
            unmet_demand: 0,
            plan: None,
            replans: 0,
            plan_fallbacks: 0,
            reschedule_due,
            pending: None,
            outcome: None,
            record,
            trace: Trace::default(),
        })
    }

    /// Run events until the agent must decide or the episode ends. Calling it
    /// again without acting returns the same decision.
    pub fn advance(&mut self) -> Result<Step, SimError> {
        if let Some(o) = &self.outcome {
            return Ok(Step::Terminal(o.clone()));
        }
        if let Some(dp) = &self.pending {
            return Ok(Step::Decision(dp.clone()));
        }
        loop {
            self.settle();
            if self.is_finished() {
                let time = self
                    .record
                    .jobs
                    .iter()
                    .filter_map(|j| j.completion)
                    .fold(0.0, f64::max);
                let o = Outcome::Completed { time };
                self.outcome = Some(o.clone());
                return Ok(Step::Terminal(o));
            }
            match self.find_decision() {
                Some(Found::Agent(dp)) => {
                    self.log(None, Some(dp.clone()), None, false);
                    self.pending = Some(dp.clone());
                    return Ok(Step::Decision(dp));
                }
                Some(Found::Auto(dp, a)) => {
                    self.effect(&dp, &a);
                    self.log(None, None, Some(a), true);
                    continue;
                }
                None => {}
            }
            if self.queue.is_empty() {
                let o = Outcome::Deadlock {
                    time: self.t,
                    diagnostic: self.diagnose(),
                };
                self.outcome = Some(o.clone());
                return Ok(Step::Terminal(o));
            }
            self.process_next_batch();
        }
    }

    /// Apply the agent's answer to the pending decision. Illegal actions
    /// leave the state untouched.
    pub fn apply(&mut self, a: &Action) -> Result<(), SimError> {
        if self.outcome.is_some() {
            return Err(SimError::Finished);
        }
        let Some(dp) = self.pending.clone() else {
            return Err(SimError::NoDecision);
        };
        if !dp.is_legal(a) {
            return Err(SimError::Illegal {
                action: a.clone(),
                legal: dp.legal_actions.clone(),
            });
        }
        self.pending = None;
        self.effect(&dp, a);
        self.trace.actions.push(a.clone());
        self.log(None, None, Some(a.clone()), false);
        Ok(())
    }

    /// Drive the episode to the end with `policy`.
    pub fn run<F>(&mut self, mut policy: F) -> Result<Outcome, SimError>
    where
        F: FnMut(&SimState, &DecisionPoint) -> Action,
    {
        loop {
            match self.advance()? {
                Step::Terminal(o) => return Ok(o),
                Step::Decision(dp) => {
                    let a = policy(self, &dp);
                    self.apply(&a)?;
                }
            }
        }
    }

    fn log(&mut self, event: Option<Event>, decision: Option<DecisionPoint>, action: Option<Action>, auto: bool) {
        let rec = TraceRecord {
            step: self.trace.len,
            t: self.t,
            event,
            decision,
            action,
            auto,
            state_hash: format!("{:016x}", self.state_hash()),
        };
        let keep = self.config.record_trace;
        self.trace.push(rec, keep);
    }

    fn schedule(&mut self, time: f64, ev: Event) -> EventKey {
        let key = ev.key(time, self.next_seq);
        self.next_seq += 1;
        self.queue.insert(key, ev);
        key
    }

    fn endo(kind: EventKind, machine: Option<usize>, job: Option<usize>, vehicle: Option<usize>) -> Event {
        Event {
            kind,
            machine,
            job,
            vehicle,
            exo: None,
        }
    }

    fn buffer_changed(&mut self, m: usize) {
        let n = self.machines[m].input.len();
        push_step(&mut self.record.machines[m].buffer, self.t, n);
    }

    // ----- helpers on routing -----

    fn pool_routing(&self) -> bool {
        matches!(self.config.routing, RoutingControl::Pool(_) | RoutingControl::AgentUpfront)
    }

    fn fallback_rule(&self) -> RoutingRule {
        match self.config.routing {
            RoutingControl::Pool(r) | RoutingControl::Plan(r) => r,
            _ => RoutingRule::Sq,
        }
    }

    fn fleet_agent(&self) -> bool {
        matches!(self.transport_mode(), TransportMode::Fleet(_)) && self.config.transport == TransportControl::Agent
    }

    /// Machine is in service and has room in its input buffer.
    pub(crate) fn open(&self, m: usize) -> bool {
        let ms = &self.machines[m];
        ms.available
            && self.inst.machines[m]
                .input_buffer
                .is_none_or(|c| ms.input.len() + ms.reserved < c)
    }

    fn out_room(&self, m: usize) -> bool {
        self.inst.machines[m]
            .output_buffer
            .is_none_or(|c| self.machines[m].outbuf.len() < c)
    }

    /// Machines allowed for operation `op` of `job`, in service or not.
    fn allowed_machines(&self, job: usize, op: usize) -> Vec<usize> {
        match self.jobs[job].route[op] {
            Some(m) => vec![m],
            None => self.inst.eligible_machines(job, op),
        }
    }

    /// `(op, machine)` options for the next move of a job, by machine then op.
    pub(crate) fn candidate_pairs(&self, job: usize) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .ready_ops(job)
            .into_iter()
            .flat_map(|k| self.allowed_machines(job, k).into_iter().map(move |m| (k, m)))
            .collect();
        out.sort_by_key(|&(k, m)| (m, k));
        out
    }

    fn routable(&self, j: usize) -> bool {
        let js = &self.jobs[j];
        matches!(js.phase, JobPhase::Awaiting { .. })
            && js.dest.is_none()
            && js.vehicle.is_none()
            && (self.config.routing != RoutingControl::AgentUpfront || js.route.iter().all(Option::is_some))
    }

    /// A finished job waiting in a bounded output buffer stays there until a
    /// next machine starts it, as long as no transport or bounded input
    /// buffer lies in between. The output buffer is then the buffer between
    /// the stages.
    fn staged(&self, j: usize, pairs: &[(usize, usize)]) -> bool {
        let JobPhase::Awaiting { at } = self.jobs[j].phase else {
            return false;
        };
        at < self.machines.len()
            && self.transport_mode() == TransportMode::None
            && self.inst.machines[at].output_buffer.is_some()
            && !pairs.is_empty()
            && (pairs.len() == 1 || self.pool_routing())
            && pairs.iter().all(|&(_, m)| self.inst.machines[m].input_buffer.is_none())
    }

    fn reserve(&mut self, job: usize, op: usize, m: usize) {
        self.jobs[job].dest = Some((op, m));
        self.machines[m].reserved += 1;
    }

    /// Remove a waiting job from the machine output side it sits at.
    fn detach(&mut self, job: usize) {
        if let JobPhase::Awaiting { at } = self.jobs[job].phase {
            if at < self.machines.len() {
                let ms = &mut self.machines[at];
                ms.outbuf.retain(|&j| j != job);
                ms.held.retain(|&j| j != job);
            }
        }
    }

    fn enqueue(&mut self, job: usize) {
        let (op, m) = self.jobs[job].dest.take().expect("destination reserved");
        self.machines[m].reserved -= 1;
        self.machines[m].input.push((job, op));
        self.jobs[job].phase = JobPhase::Queued { machine: m };
        self.jobs[job].since = self.t;
        self.buffer_changed(m);
    }

    // ----- settling: moves that need no decision -----

    fn settle(&mut self) {
        loop {
            let mut changed = self.unhold();
            changed |= self.assign_destinations();
            changed |= self.move_jobs();
            changed |= self.dispatch_vehicles();
            if !changed {
                break;
            }
        }
    }

    fn unhold(&mut self) -> bool {
        let mut changed = false;
        for m in 0..self.machines.len() {
            while !self.machines[m].held.is_empty() && self.out_room(m) {
                let j = self.machines[m].held.remove(0);
                self.machines[m].outbuf.push(j);
                changed = true;
            }
        }
        changed
    }

    fn assign_destinations(&mut self) -> bool {
        let mut changed = false;
        for j in 0..self.jobs.len() {
            if !self.routable(j) {
                continue;
            }
            let pairs = self.candidate_pairs(j);
            if pairs.is_empty() {
                continue;
            }
            if self.staged(j, &pairs) {
                continue;
            }
            let free: Vec<(usize, usize)> = pairs.iter().copied().filter(|&(_, m)| self.open(m)).collect();
            if pairs.len() == 1 {
                if let Some(&(k, m)) = free.first() {
                    self.reserve(j, k, m);
                    changed = true;
                }
                continue;
            }
            if self.config.routing == RoutingControl::AgentInterlaced || self.fleet_agent() {
                continue;
            }
            if self.transport_mode() == TransportMode::None
                && self.pool_routing()
                && pairs.iter().all(|&(_, m)| self.inst.machines[m].input_buffer.is_none())
            {
                self.detach(j);
                self.jobs[j].phase = JobPhase::Pooled;
                self.jobs[j].since = self.t;
                self.pool.insert(j);
                changed = true;
                continue;
            }
            if free.is_empty() {
                continue;
            }
            let planned = match (&self.config.routing, &self.plan) {
                (RoutingControl::Plan(_), Some(plan)) => free
                    .iter()
                    .position(|&(k, m)| plan.assignment[j][k] == Some(m)),
                _ => None,
            };
            let idx = planned.unwrap_or_else(|| self.fallback_rule().choose(self, j, &free));
            let (k, m) = free[idx];
            self.reserve(j, k, m);
            changed = true;
        }
        changed
    }

    fn move_jobs(&mut self) -> bool {
        let mode = self.transport_mode();
        if matches!(mode, TransportMode::Fleet(_)) {
            return false;
        }
        let mut changed = false;
        for j in 0..self.jobs.len() {
            let js = &self.jobs[j];
            let (JobPhase::Awaiting { at }, Some((_, m)), None) = (js.phase, js.dest, js.vehicle) else {
                continue;
            };
            self.detach(j);
            if mode == TransportMode::None {
                self.enqueue(j);
            } else {
                self.jobs[j].phase = JobPhase::InTransit { to: m };
                let eta = self.t + self.inst.transport.travel_time(at, m);
                self.schedule(eta, Self::endo(EventKind::TransitArrive, Some(m), Some(j), None));
            }
            changed = true;
        }
        changed
    }

    fn dispatch_vehicles(&mut self) -> bool {
        if !matches!(self.transport_mode(), TransportMode::Fleet(_)) || self.fleet_agent() {
            return false;
        }
        let mut changed = false;
        for v in 0..self.vehicles.len() {
            if self.vehicles[v].task != VehicleTask::Idle {
                continue;
            }
            let oldest = (0..self.jobs.len())
                .filter(|&j| {
                    let js = &self.jobs[j];
                    matches!(js.phase, JobPhase::Awaiting { .. }) && js.dest.is_some() && js.vehicle.is_none()
                })
                .min_by(|&a, &b| self.jobs[a].since.total_cmp(&self.jobs[b].since).then(a.cmp(&b)));
            if let Some(j) = oldest {
                self.claim(v, j);
                changed = true;
            }
        }
        changed
    }

    fn claim(&mut self, v: usize, job: usize) {
        let JobPhase::Awaiting { at } = self.jobs[job].phase else {
            unreachable!("only waiting jobs are picked");
        };
        self.jobs[job].vehicle = Some(v);
        self.vehicles[v].task = VehicleTask::Fetch { job };
        let eta = self.t + self.inst.transport.travel_time(self.vehicles[v].at, at);
        self.schedule(eta, Self::endo(EventKind::VehicleArrive, None, Some(job), Some(v)));
    }

    fn send_loaded(&mut self, v: usize, job: usize) {
        let (_, m) = self.jobs[job].dest.expect("destination reserved");
        self.jobs[job].phase = JobPhase::InTransit { to: m };
        self.vehicles[v].task = VehicleTask::Carry { job };
        let eta = self.t + self.inst.transport.travel_time(self.vehicles[v].at, m);
        self.schedule(eta, Self::endo(EventKind::VehicleArrive, Some(m), Some(job), Some(v)));
    }

    // ----- decisions -----

    fn machine_ready(&self, m: usize) -> bool {
        let ms = &self.machines[m];
        ms.available
            && ms.down_depth == 0
            && matches!(ms.work, Work::Idle)
            && ms.held.is_empty()
            && !ms.waiting
            && ms.suspended.is_none()
    }

    /// `(job, op)` pairs the machine may start, ascending.
    pub fn sequencing_candidates(&self, m: usize) -> Vec<(usize, usize)> {
        let mut c: Vec<(usize, usize)> = self.machines[m].input.clone();
        let staged = (0..self.jobs.len()).filter(|&j| self.routable(j) && self.staged(j, &self.candidate_pairs(j)));
        for j in self.pool.iter().copied().chain(staged) {
            for k in self.ready_ops(j) {
                if self.allowed_machines(j, k).contains(&m) {
                    c.push((j, k));
                }
            }
        }
        c.sort_unstable();
        c.dedup();
        if self.inst.triplet.has(ConstraintTag::Prmu) {
            c.retain(|&(j, k)| {
                k == 0
                    || self
                        .permutation
                        .iter()
                        .find(|&&jj| !self.jobs[jj].started[k])
                        .is_none_or(|&next| next == j)
            });
        }
        c
    }

    /// Jobs a free vehicle may fetch.
    fn pickable(&self) -> Vec<usize> {
        (0..self.jobs.len())
            .filter(|&j| {
                let js = &self.jobs[j];
                matches!(js.phase, JobPhase::Awaiting { .. })
                    && js.vehicle.is_none()
                    && (js.dest.is_some()
                        || (self.routable(j)
                            && self.candidate_pairs(j).iter().any(|&(_, m)| self.open(m))))
            })
            .collect()
    }

    /// Destinations with a free slot for a loaded job: `(op, machine)` with
    /// the lowest op per machine.
    fn delivery_options(&self, job: usize) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for (k, m) in self.candidate_pairs(job) {
            if self.open(m) && !out.iter().any(|&(_, mm)| mm == m) {
                out.push((k, m));
            }
        }
        out
    }

    /// Waiting is offered while something else can still happen: a pending
    /// event, or another resource able to act at this instant.
    fn can_wait(&self) -> bool {
        if !self.config.allow_wait {
            return false;
        }
        if !self.queue.is_empty() {
            return true;
        }
        let machines = (0..self.machines.len())
            .filter(|&m| self.machine_ready(m) && !self.sequencing_candidates(m).is_empty())
            .count();
        let vehicles = if self.fleet_agent() && !self.pickable().is_empty() {
            self.vehicles
                .iter()
                .filter(|v| v.task == VehicleTask::Idle && !v.waiting)
                .count()
        } else {
            0
        };
        machines + vehicles > 1
    }

    fn find_decision(&mut self) -> Option<Found> {
        let t = self.t;
        if let Some(trigger) = self.reschedule_due {
            return Some(Found::Agent(DecisionPoint {
                time: t,
                kind: DecisionKind::Reschedule { trigger },
                legal_actions: vec![Action::Reschedule { params: vec![] }],
            }));
        }

        match self.config.routing {
            RoutingControl::AgentUpfront => {
                for j in 0..self.jobs.len() {
                    if !self.in_system(j) {
                        continue;
                    }
                    let js = &self.jobs[j];
                    if let Some(k) = (0..js.route.len()).find(|&k| js.route[k].is_none() && !js.started[k]) {
                        let candidates = self.inst.eligible_machines(j, k);
                        let legal = candidates.iter().map(|&m| Action::Route { op: k, machine: m }).collect();
                        return Some(Found::Agent(DecisionPoint {
                            time: t,
                            kind: DecisionKind::Routing { job: j, candidates },
                            legal_actions: legal,
                        }));
                    }
                }
            }
            RoutingControl::AgentInterlaced => {
                for j in 0..self.jobs.len() {
                    if !self.routable(j) {
                        continue;
                    }
                    let pairs = self.candidate_pairs(j);
                    if pairs.len() < 2 {
                        continue;
                    }
                    let legal: Vec<Action> = pairs
                        .iter()
                        .filter(|&&(_, m)| self.open(m))
                        .map(|&(op, machine)| Action::Route { op, machine })
                        .collect();
                    if legal.is_empty() {
                        continue;
                    }
                    let mut candidates: Vec<usize> = pairs.iter().map(|p| p.1).collect();
                    candidates.dedup();
                    return Some(Found::Agent(DecisionPoint {
                        time: t,
                        kind: DecisionKind::Routing { job: j, candidates },
                        legal_actions: legal,
                    }));
                }
            }
            _ => {}
        }

        if self.fleet_agent() {
            for v in 0..self.vehicles.len() {
                if let VehicleTask::Holding { job } = self.vehicles[v].task {
                    let opts = self.delivery_options(job);
                    if !opts.is_empty() {
                        return Some(Found::Agent(DecisionPoint {
                            time: t,
                            kind: DecisionKind::TransportDestination { vehicle: v, job },
                            legal_actions: opts.iter().map(|&(_, machine)| Action::Deliver { machine }).collect(),
                        }));
                    }
                }
            }
            for v in 0..self.vehicles.len() {
                if self.vehicles[v].task != VehicleTask::Idle || self.vehicles[v].waiting {
                    continue;
                }
                let picks = self.pickable();
                if picks.is_empty() {
                    break;
                }
                let mut legal: Vec<Action> = picks.into_iter().map(|job| Action::Pick { job }).collect();
                if self.can_wait() {
                    legal.push(Action::Wait);
                }
                return Some(Found::Agent(DecisionPoint {
                    time: t,
                    kind: DecisionKind::TransportSource { vehicle: v },
                    legal_actions: legal,
                }));
            }
        }

        for m in 0..self.machines.len() {
            if !self.machine_ready(m) {
                continue;
            }
            let cands = self.sequencing_candidates(m);
            if cands.is_empty() {
                continue;
            }
            let mut legal: Vec<Action> = cands.iter().map(|&(job, op)| Action::Sequence { job, op }).collect();
            let kind = DecisionKind::Sequencing { machine: m };
            match self.config.sequencing.clone() {
                SequencingControl::Agent => {
                    if self.can_wait() {
                        legal.push(Action::Wait);
                    }
                    return Some(Found::Agent(DecisionPoint {
                        time: t,
                        kind,
                        legal_actions: legal,
                    }));
                }
                SequencingControl::Rule(r) => {
                    let i = r.choose(self, Some(m), &cands);
                    let a = legal[i].clone();
                    return Some(Found::Auto(
                        DecisionPoint {
                            time: t,
                            kind,
                            legal_actions: legal,
                        },
                        a,
                    ));
                }
                SequencingControl::Plan => {
                    let i = self.plan_choice(m, &cands);
                    let a = legal[i].clone();
                    return Some(Found::Auto(
                        DecisionPoint {
                            time: t,
                            kind,
                            legal_actions: legal,
                        },
                        a,
                    ));
                }
            }
        }
        None
    }

    /// Next planned operation of the machine if available, FIFO otherwise.
    fn plan_choice(&mut self, m: usize, cands: &[(usize, usize)]) -> usize {
        if let Some(plan) = &self.plan {
            let next = plan.sequence[m]
                .iter()
                .find(|&&(j, k)| !self.jobs[j].started[k]);
            if let Some(i) = next.and_then(|p| cands.iter().position(|c| c == p)) {
                return i;
            }
        }
        self.plan_fallbacks += 1;
        SequencingRule::Fifo.choose(self, Some(m), cands)
    }

    fn effect(&mut self, dp: &DecisionPoint, a: &Action) {
        match (a, &dp.kind) {
            (Action::Reschedule { params }, _) => {
                let planner = self.config.planner.clone().expect("checked at init");
                self.plan = Some(planner.plan(self, params));
                self.replans += 1;
                self.reschedule_due = None;
            }
            (Action::Route { op, machine }, DecisionKind::Routing { job, .. }) => {
                if self.config.routing == RoutingControl::AgentUpfront {
                    self.jobs[*job].route[*op] = Some(*machine);
                } else {
                    self.reserve(*job, *op, *machine);
                }
            }
            (Action::Pick { job }, DecisionKind::TransportSource { vehicle }) => self.claim(*vehicle, *job),
            (Action::Deliver { machine }, DecisionKind::TransportDestination { vehicle, job }) => {
                let (op, m) = self
                    .delivery_options(*job)
                    .into_iter()
                    .find(|&(_, m)| m == *machine)
                    .expect("legal destination");
                self.reserve(*job, op, m);
                self.send_loaded(*vehicle, *job);
            }
            (Action::Sequence { job, op }, DecisionKind::Sequencing { machine }) => self.start(*machine, *job, *op),
            (Action::Wait, DecisionKind::Sequencing { machine }) => self.machines[*machine].waiting = true,
            (Action::Wait, DecisionKind::TransportSource { vehicle }) => self.vehicles[*vehicle].waiting = true,
            (a, k) => unreachable!("action {a} does not answer {k:?}"),
        }
    }

    // ----- processing -----

    fn start(&mut self, m: usize, job: usize, op: usize) {
        let t = self.t;
        let mut ops = vec![(job, op)];
        self.detach(job);
        self.pool.remove(&job);
        self.machines[m].input.retain(|&e| e != (job, op));
        let batch = self.inst.machines[m].batch.clone();
        if let Some(b) = &batch {
            let ty = self.inst.jobs[job].operations[op].op_type;
            let mut mates: Vec<(usize, usize)> = self.machines[m]
                .input
                .iter()
                .copied()
                .filter(|&(j, k)| self.inst.jobs[j].operations[k].op_type == ty)
                .collect();
            mates.sort_by(|a, b| self.jobs[a.0].since.total_cmp(&self.jobs[b.0].since).then(a.cmp(b)));
            for mate in mates.into_iter().take(b.capacity().saturating_sub(1)) {
                self.machines[m].input.retain(|&e| e != mate);
                ops.push(mate);
            }
        }
        let duration = match &batch {
            Some(BatchSpec::Fixed { duration, .. }) => *duration,
            Some(BatchSpec::Dynamic { .. }) => ops
                .iter()
                .map(|&(j, k)| self.realized_duration(j, k, m))
                .fold(0.0, f64::max),
            None => self.realized_duration(job, op, m),
        };
        for &(j, k) in &ops {
            let js = &mut self.jobs[j];
            js.phase = JobPhase::Processing { machine: m };
            js.started[k] = true;
            js.dest = None;
            if k == 0 {
                self.permutation.push(j);
            }
            let rec = &mut self.record.jobs[j].ops[k];
            rec.machine = Some(m);
            rec.duration = Some(duration);
        }
        self.buffer_changed(m);
        let setup = self.inst.setup_time(m, self.machines[m].last_job, job);
        if setup > 0.0 {
            let until = t + setup;
            self.record.machines[m].setup.push(Interval::new(t, until));
            let key = self.schedule(until, Self::endo(EventKind::SetupEnd, Some(m), Some(job), None));
            self.machines[m].work = Work::Setup {
                ops,
                until,
                process: duration,
                key,
            };
        } else {
            self.begin_busy(m, ops, duration, None);
        }
    }

    fn begin_busy(&mut self, m: usize, ops: Vec<(usize, usize)>, remaining: f64, seg_from: Option<usize>) {
        let t = self.t;
        let until = t + remaining;
        let busy = &mut self.record.machines[m].busy;
        let seg_from = seg_from.unwrap_or(busy.len());
        busy.push(BusySegment {
            interval: Interval::new(t, until),
            activity_end: None,
        });
        for &(j, k) in &ops {
            self.record.jobs[j].ops[k].start.get_or_insert(t);
        }
        let key = self.schedule(until, Self::endo(EventKind::ProcessEnd, Some(m), Some(ops[0].0), None));
        self.machines[m].work = Work::Busy {
            ops,
            until,
            seg_from,
            key,
        };
    }

    fn process_next_batch(&mut self) {
        let time = self.queue.keys().next().expect("nonempty queue").time;
        debug_assert!(time >= self.t, "clock never decreases");
        self.t = time;
        let mut triggers: Vec<ExoKind> = Vec::new();
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().time != time {
                break;
            }
            let ev = entry.remove();
            if let EventKind::Exo(kind) = ev.kind {
                triggers.push(kind);
                self.fired.push(ev.exo.expect("exogenous index"));
            }
            self.handle(&ev);
            self.log(Some(ev), None, None, false);
        }
        for ms in &mut self.machines {
            ms.waiting = false;
        }
        for v in &mut self.vehicles {
            v.waiting = false;
        }
        if let Some(on) = &self.config.reschedule_on {
            if let Some(k) = triggers.iter().find(|k| on.contains(k)) {
                self.reschedule_due = Some(Some(*k));
            }
        }
    }

    fn handle(&mut self, ev: &Event) {
        let t = self.t;
        match ev.kind {
            EventKind::Exo(ExoKind::JobRelease) => {
                let j = ev.job.expect("job");
                self.jobs[j].phase = JobPhase::Awaiting { at: self.inst.depot() };
                self.jobs[j].since = t;
                self.record.jobs[j].release = t;
            }
            EventKind::Exo(ExoKind::BreakdownStart) => self.breakdown_start(ev.machine.expect("machine")),
            EventKind::Exo(ExoKind::BreakdownEnd) => self.breakdown_end(ev.machine.expect("machine")),
            EventKind::Exo(ExoKind::MachineAdded) => self.machines[ev.machine.expect("machine")].available = true,
            EventKind::Exo(ExoKind::DemandArrival) => {
                if self.sink > 0 {
                    self.sink -= 1;
                    push_step(&mut self.record.sink, t, self.sink);
                } else {
                    self.unmet_demand += 1;
                }
            }
            EventKind::ProcessEnd => self.finish_processing(ev.machine.expect("machine")),
            EventKind::SetupEnd => {
                let m = ev.machine.expect("machine");
                let Work::Setup { ops, process, .. } = std::mem::replace(&mut self.machines[m].work, Work::Idle)
                else {
                    unreachable!("setup end on a machine not in setup");
                };
                if self.machines[m].pending_down {
                    self.machines[m].pending_down = false;
                    self.machines[m].down_since = Some(t);
                    self.machines[m].suspended = Some(Suspended {
                        ops,
                        setup_left: 0.0,
                        process_left: process,
                        seg_from: None,
                    });
                } else {
                    self.begin_busy(m, ops, process, None);
                }
            }
            EventKind::TransitArrive => self.enqueue(ev.job.expect("job")),
            EventKind::VehicleArrive => {
                let v = ev.vehicle.expect("vehicle");
                match self.vehicles[v].task {
                    VehicleTask::Fetch { job } => {
                        if let JobPhase::Awaiting { at } = self.jobs[job].phase {
                            self.vehicles[v].at = at;
                        }
                        self.detach(job);
                        self.vehicles[v].loaded_since = Some(t);
                        if self.jobs[job].dest.is_some() {
                            self.send_loaded(v, job);
                        } else {
                            self.jobs[job].phase = JobPhase::InTransit { to: self.vehicles[v].at };
                            self.vehicles[v].task = VehicleTask::Holding { job };
                        }
                    }
                    VehicleTask::Carry { job } => {
                        let (_, m) = self.jobs[job].dest.expect("destination reserved");
                        self.vehicles[v].at = m;
                        self.vehicles[v].task = VehicleTask::Idle;
                        if let Some(since) = self.vehicles[v].loaded_since.take() {
                            self.record.vehicles[v].loaded.push(Interval::new(since, t));
                        }
                        self.jobs[job].vehicle = None;
                        self.enqueue(job);
                    }
                    other => unreachable!("vehicle arrival while {other:?}"),
                }
            }
        }
    }

    fn finish_processing(&mut self, m: usize) {
        let t = self.t;
        let Work::Busy { ops, seg_from, .. } = std::mem::replace(&mut self.machines[m].work, Work::Idle) else {
            unreachable!("completion on an idle machine");
        };
        for seg in &mut self.record.machines[m].busy[seg_from..] {
            seg.activity_end = Some(t);
        }
        self.machines[m].last_job = Some(ops[0].0);
        for (j, k) in ops {
            self.jobs[j].done[k] = true;
            self.record.jobs[j].ops[k].end = Some(t);
            if self.jobs[j].done.iter().all(|&d| d) {
                self.jobs[j].phase = JobPhase::Done;
                self.record.jobs[j].completion = Some(t);
                self.sink += 1;
                push_step(&mut self.record.sink, t, self.sink);
            } else {
                self.jobs[j].phase = JobPhase::Awaiting { at: m };
                self.jobs[j].since = t;
                if self.out_room(m) {
                    self.machines[m].outbuf.push(j);
                } else {
                    self.machines[m].held.push(j);
                }
            }
        }
    }

    fn breakdown_start(&mut self, m: usize) {
        let t = self.t;
        self.machines[m].down_depth += 1;
        if self.machines[m].down_depth > 1 {
            return;
        }
        let work = std::mem::replace(&mut self.machines[m].work, Work::Idle);
        match work {
            Work::Idle => {}
            Work::Setup { .. } if !self.config.preempt_setups => {
                self.machines[m].work = work;
                self.machines[m].pending_down = true;
                return;
            }
            Work::Setup {
                ops,
                until,
                process,
                key,
            } => {
                self.queue.remove(&key);
                let iv = self.record.machines[m].setup.last_mut().expect("open setup");
                let full = iv.len();
                iv.end = t;
                let setup_left = match self.config.preempt {
                    PreemptPolicy::Resume => until - t,
                    PreemptPolicy::Restart => full,
                };
                self.machines[m].suspended = Some(Suspended {
                    ops,
                    setup_left,
                    process_left: process,
                    seg_from: None,
                });
            }
            Work::Busy {
                ops,
                until,
                seg_from,
                key,
            } => {
                self.queue.remove(&key);
                let seg = self.record.machines[m].busy.last_mut().expect("open segment");
                seg.interval.end = t;
                let (j, k) = ops[0];
                let process_left = match self.config.preempt {
                    PreemptPolicy::Resume => until - t,
                    PreemptPolicy::Restart => self.record.jobs[j].ops[k].duration.expect("duration set"),
                };
                self.machines[m].suspended = Some(Suspended {
                    ops,
                    setup_left: 0.0,
                    process_left,
                    seg_from: Some(seg_from),
                });
            }
        }
        self.machines[m].down_since = Some(t);
    }

    fn breakdown_end(&mut self, m: usize) {
        let t = self.t;
        let ms = &mut self.machines[m];
        if ms.down_depth == 0 {
            return;
        }
        ms.down_depth -= 1;
        if ms.down_depth > 0 {
            return;
        }
        if ms.pending_down {
            // the setup outlasted the breakdown
            ms.pending_down = false;
            return;
        }
        if let Some(since) = ms.down_since.take() {
            self.record.machines[m].down.push(Interval::new(since, t));
        }
        if let Some(s) = self.machines[m].suspended.take() {
            if s.setup_left > 0.0 {
                let until = t + s.setup_left;
                self.record.machines[m].setup.push(Interval::new(t, until));
                let key = self.schedule(until, Self::endo(EventKind::SetupEnd, Some(m), Some(s.ops[0].0), None));
                self.machines[m].work = Work::Setup {
                    ops: s.ops,
                    until,
                    process: s.process_left,
                    key,
                };
            } else {
                self.begin_busy(m, s.ops, s.process_left, s.seg_from);
            }
        }
    }

    fn diagnose(&self) -> String {
        let mut parts = Vec::new();
        for (m, ms) in self.machines.iter().enumerate() {
            if !ms.held.is_empty() {
                parts.push(format!("m{m} blocked holding {:?}", ms.held));
            }
        }
        let stuck: Vec<usize> = (0..self.jobs.len()).filter(|&j| self.in_system(j)).collect();
        parts.push(format!("unfinished jobs {stuck:?}"));
        parts.join("; ")
    }
}
