use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::events::{Event, EventKey, EventKind, ExogenousEvent};
use super::hash::StateHasher;
use super::trace::Trace;
use super::{DecisionPoint, ExoKind, Outcome, SimConfig};
use crate::instance::{Instance, TransportMode};
use crate::objectives::{Interval, ScheduleRecord};
use crate::plan::Plan;

/// Where a job currently is.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum JobPhase {
    NotReleased,
    /// At a machine's output side or at the depot, waiting for a destination
    /// or for its move.
    Awaiting { at: usize },
    /// In the virtual buffer shared by all eligible machines.
    Pooled,
    InTransit { to: usize },
    Queued { machine: usize },
    Processing { machine: usize },
    Done,
}

/// Machine status as seen from outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Activity {
    Idle,
    Setup { ops: Vec<(usize, usize)>, remaining: f64 },
    Busy { ops: Vec<(usize, usize)>, remaining: f64 },
    /// Finished work cannot leave: the output side is full.
    Blocked,
    Down,
    /// Not yet part of its work center.
    Unavailable,
}

#[derive(Clone, Debug)]
pub(crate) struct JobState {
    pub phase: JobPhase,
    pub done: Vec<bool>,
    pub started: Vec<bool>,
    /// Machine fixed for each operation, if any.
    pub route: Vec<Option<usize>>,
    /// Destination `(op, machine)` holding a reserved input slot.
    pub dest: Option<(usize, usize)>,
    /// Time the job entered its current waiting place.
    pub since: f64,
    pub vehicle: Option<usize>,
}

impl JobState {
    pub fn finished(&self) -> bool {
        self.phase == JobPhase::Done
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Work {
    Idle,
    Setup {
        ops: Vec<(usize, usize)>,
        until: f64,
        /// Realized processing time that follows.
        process: f64,
        key: EventKey,
    },
    Busy {
        ops: Vec<(usize, usize)>,
        until: f64,
        /// First busy segment of this activity in the record.
        seg_from: usize,
        key: EventKey,
    },
}

/// Work interrupted by a breakdown.
#[derive(Clone, Debug)]
pub(crate) struct Suspended {
    pub ops: Vec<(usize, usize)>,
    pub setup_left: f64,
    pub process_left: f64,
    pub seg_from: Option<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct MachineState {
    pub available: bool,
    pub work: Work,
    pub down_depth: u32,
    /// A breakdown arrived during a setup that is allowed to finish.
    pub pending_down: bool,
    pub suspended: Option<Suspended>,
    pub waiting: bool,
    pub input: Vec<(usize, usize)>,
    pub reserved: usize,
    pub outbuf: Vec<usize>,
    pub held: Vec<usize>,
    pub last_job: Option<usize>,
    pub down_since: Option<f64>,
}

impl MachineState {
    pub fn is_down(&self) -> bool {
        self.down_depth > 0 && !self.pending_down
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum VehicleTask {
    Idle,
    /// Driving empty to pick up `job`.
    Fetch { job: usize },
    /// Loaded, driving to the job's destination.
    Carry { job: usize },
    /// Loaded, waiting for a destination.
    Holding { job: usize },
}

#[derive(Clone, Debug)]
pub(crate) struct VehicleState {
    pub at: usize,
    pub task: VehicleTask,
    pub waiting: bool,
    pub loaded_since: Option<f64>,
}

/// Full dynamic state of one simulation run.
#[derive(Clone, Debug)]
pub struct SimState {
    pub(crate) inst: Arc<Instance>,
    pub(crate) config: SimConfig,
    pub(crate) seed: u64,
    pub(crate) horizon: Option<f64>,
    pub(crate) t: f64,
    pub(crate) exo: Vec<ExogenousEvent>,
    pub(crate) fired: Vec<usize>,
    pub(crate) queue: BTreeMap<EventKey, Event>,
    pub(crate) next_seq: u64,
    pub(crate) multipliers: Vec<Vec<f64>>,
    pub(crate) jobs: Vec<JobState>,
    pub(crate) machines: Vec<MachineState>,
    pub(crate) vehicles: Vec<VehicleState>,
    pub(crate) pool: BTreeSet<usize>,
    /// Jobs in the order they started their first operation (prmu).
    pub(crate) permutation: Vec<usize>,
    pub(crate) sink: usize,
    pub(crate) unmet_demand: usize,
    pub(crate) plan: Option<Plan>,
    pub(crate) replans: usize,
    pub(crate) plan_fallbacks: usize,
    pub(crate) reschedule_due: Option<Option<ExoKind>>,
    pub(crate) pending: Option<DecisionPoint>,
    pub(crate) outcome: Option<Outcome>,
    pub(crate) record: ScheduleRecord,
    pub(crate) trace: Trace,
}

impl SimState {
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn pending(&self) -> Option<&DecisionPoint> {
        self.pending.as_ref()
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// The pre-sampled exogenous schedule of the whole run.
    pub fn exogenous(&self) -> &[ExogenousEvent] {
        &self.exo
    }

    /// Exogenous events that have fired so far, in firing order.
    pub fn fired_exogenous(&self) -> Vec<ExogenousEvent> {
        self.fired.iter().map(|&i| self.exo[i].clone()).collect()
    }

    pub fn job_phase(&self, job: usize) -> JobPhase {
        self.jobs[job].phase
    }

    pub fn op_done(&self, job: usize, op: usize) -> bool {
        self.jobs[job].done[op]
    }

    pub fn op_started(&self, job: usize, op: usize) -> bool {
        self.jobs[job].started[op]
    }

    pub fn job_since(&self, job: usize) -> f64 {
        self.jobs[job].since
    }

    /// Reserved destination `(op, machine)` of the job's next move.
    pub fn job_dest(&self, job: usize) -> Option<(usize, usize)> {
        self.jobs[job].dest
    }

    pub fn job_route(&self, job: usize) -> &[Option<usize>] {
        &self.jobs[job].route
    }

    /// Operations whose predecessors are done and that have not started.
    pub fn ready_ops(&self, job: usize) -> Vec<usize> {
        let js = &self.jobs[job];
        self.inst.jobs[job]
            .operations
            .iter()
            .enumerate()
            .filter(|(k, o)| !js.started[*k] && o.predecessors.iter().all(|&p| js.done[p]))
            .map(|(k, _)| k)
            .collect()
    }

    pub fn released(&self, job: usize) -> bool {
        self.jobs[job].phase != JobPhase::NotReleased
    }

    pub fn in_system(&self, job: usize) -> bool {
        !matches!(self.jobs[job].phase, JobPhase::NotReleased | JobPhase::Done)
    }

    pub fn multiplier(&self, job: usize, op: usize) -> f64 {
        self.multipliers[job][op]
    }

    /// Realized processing time of `op` of `job` on `machine`.
    pub fn realized_duration(&self, job: usize, op: usize, machine: usize) -> f64 {
        self.inst.jobs[job].operations[op].duration * self.multipliers[job][op]
            / self.inst.machines[machine].speed.for_job(job)
    }

    /// Input buffer of a machine as `(job, op)` in arrival order.
    pub fn input_buffer(&self, machine: usize) -> &[(usize, usize)] {
        &self.machines[machine].input
    }

    /// Jobs waiting in the shared virtual buffer.
    pub fn pool(&self) -> impl Iterator<Item = usize> + '_ {
        self.pool.iter().copied()
    }

    /// Jobs whose next move reserved a slot at the machine.
    pub fn reserved_for(&self, machine: usize) -> Vec<(usize, usize)> {
        self.jobs
            .iter()
            .enumerate()
            .filter_map(|(j, js)| match js.dest {
                Some((op, m)) if m == machine => Some((j, op)),
                _ => None,
            })
            .collect()
    }

    pub fn last_job(&self, machine: usize) -> Option<usize> {
        self.machines[machine].last_job
    }

    /// Operations queued or on their way to the machine.
    pub fn queue_len(&self, machine: usize) -> usize {
        self.machines[machine].input.len() + self.machines[machine].reserved
    }

    /// Nominal processing work queued or on its way to the machine.
    pub fn queued_work(&self, machine: usize) -> f64 {
        self.machines[machine]
            .input
            .iter()
            .chain(self.reserved_for(machine).iter())
            .map(|&(j, k)| self.inst.nominal_duration(j, k, machine))
            .sum()
    }

    /// Time left on the machine's current (or suspended) activity.
    pub fn remaining_activity(&self, machine: usize) -> f64 {
        let ms = &self.machines[machine];
        match &ms.work {
            Work::Idle => ms
                .suspended
                .as_ref()
                .map(|s| s.setup_left + s.process_left)
                .unwrap_or(0.0),
            Work::Setup { until, process, .. } => until - self.t + process,
            Work::Busy { until, .. } => until - self.t,
        }
    }

    pub fn activity(&self, machine: usize) -> Activity {
        let ms = &self.machines[machine];
        if !ms.available {
            return Activity::Unavailable;
        }
        if ms.is_down() {
            return Activity::Down;
        }
        match &ms.work {
            Work::Setup { ops, until, .. } => Activity::Setup {
                ops: ops.clone(),
                remaining: until - self.t,
            },
            Work::Busy { ops, until, .. } => Activity::Busy {
                ops: ops.clone(),
                remaining: until - self.t,
            },
            Work::Idle if !ms.held.is_empty() => Activity::Blocked,
            Work::Idle => Activity::Idle,
        }
    }

    /// Remaining time of an operation: realized remainder while in progress,
    /// the base duration before it starts, zero once done.
    pub fn remaining_op_time(&self, job: usize, op: usize) -> f64 {
        let js = &self.jobs[job];
        if js.done[op] {
            return 0.0;
        }
        if !js.started[op] {
            return self.inst.jobs[job].operations[op].duration;
        }
        let JobPhase::Processing { machine } = js.phase else {
            return 0.0;
        };
        let ms = &self.machines[machine];
        match &ms.work {
            Work::Busy { until, .. } => until - self.t,
            Work::Setup { process, .. } => *process,
            Work::Idle => ms.suspended.as_ref().map(|s| s.process_left).unwrap_or(0.0),
        }
    }

    /// Machine an operation sits at (queued or processing).
    pub fn op_location(&self, job: usize, op: usize) -> Option<usize> {
        let js = &self.jobs[job];
        if js.done[op] {
            return None;
        }
        match js.phase {
            JobPhase::Processing { machine } if js.started[op] => Some(machine),
            JobPhase::Queued { machine } if self.machines[machine].input.contains(&(job, op)) => {
                Some(machine)
            }
            _ => None,
        }
    }

    pub fn op_active(&self, job: usize, op: usize) -> bool {
        let js = &self.jobs[job];
        js.started[op] && !js.done[op]
    }

    pub fn sink_level(&self) -> usize {
        self.sink
    }

    pub fn unmet_demand(&self) -> usize {
        self.unmet_demand
    }

    pub fn replans(&self) -> usize {
        self.replans
    }

    pub fn plan_fallbacks(&self) -> usize {
        self.plan_fallbacks
    }

    pub fn plan(&self) -> Option<&Plan> {
        self.plan.as_ref()
    }

    pub fn n_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_finished(&self) -> bool {
        self.jobs.iter().all(JobState::finished)
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub(crate) fn transport_mode(&self) -> TransportMode {
        self.inst.transport.mode
    }

    /// Schedule record with open intervals closed at the current time.
    pub fn record(&self) -> ScheduleRecord {
        let t = self.t;
        let mut rec = self.record.clone();
        rec.horizon = t;
        for (i, mr) in rec.machines.iter_mut().enumerate() {
            for seg in &mut mr.busy {
                seg.interval.end = seg.interval.end.min(t);
            }
            for iv in &mut mr.setup {
                iv.end = iv.end.min(t);
            }
            if let Some(since) = self.machines[i].down_since {
                mr.down.push(Interval::new(since, t));
            }
        }
        for (v, vr) in rec.vehicles.iter_mut().enumerate() {
            if let Some(since) = self.vehicles[v].loaded_since {
                vr.loaded.push(Interval::new(since, t));
            }
        }
        rec
    }

    /// Canonical 64-bit digest of the dynamic state. The step counter and the
    /// trace itself are excluded.
    pub fn state_hash(&self) -> u64 {
        let mut h = StateHasher::new();
        h.f64(self.t);
        h.usize(self.jobs.len());
        for (j, js) in self.jobs.iter().enumerate() {
            hash_phase(&mut h, js.phase);
            for k in 0..js.done.len() {
                h.bool(js.done[k]);
                h.bool(js.started[k]);
                h.opt_usize(js.route[k]);
                let op = &self.record.jobs[j].ops[k];
                h.opt_f64(op.start);
                h.opt_f64(op.end);
                h.opt_usize(op.machine);
            }
            match js.dest {
                Some((op, m)) => {
                    h.bool(true);
                    h.usize(op);
                    h.usize(m);
                }
                None => h.bool(false),
            }
            h.f64(js.since);
            h.opt_usize(js.vehicle);
            h.opt_f64(self.record.jobs[j].completion);
        }
        for ms in &self.machines {
            h.bool(ms.available);
            match &ms.work {
                Work::Idle => h.u64(0),
                Work::Setup { ops, until, process, .. } => {
                    h.u64(1);
                    hash_ops(&mut h, ops);
                    h.f64(*until);
                    h.f64(*process);
                }
                Work::Busy { ops, until, .. } => {
                    h.u64(2);
                    hash_ops(&mut h, ops);
                    h.f64(*until);
                }
            }
            h.u64(ms.down_depth as u64);
            h.bool(ms.pending_down);
            match &ms.suspended {
                Some(s) => {
                    h.bool(true);
                    hash_ops(&mut h, &s.ops);
                    h.f64(s.setup_left);
                    h.f64(s.process_left);
                }
                None => h.bool(false),
            }
            h.bool(ms.waiting);
            hash_ops(&mut h, &ms.input);
            h.usize(ms.reserved);
            h.usize(ms.outbuf.len());
            ms.outbuf.iter().for_each(|&j| h.usize(j));
            h.usize(ms.held.len());
            ms.held.iter().for_each(|&j| h.usize(j));
            h.opt_usize(ms.last_job);
        }
        for v in &self.vehicles {
            h.usize(v.at);
            match v.task {
                VehicleTask::Idle => h.u64(0),
                VehicleTask::Fetch { job } => {
                    h.u64(1);
                    h.usize(job);
                }
                VehicleTask::Carry { job } => {
                    h.u64(2);
                    h.usize(job);
                }
                VehicleTask::Holding { job } => {
                    h.u64(3);
                    h.usize(job);
                }
            }
            h.bool(v.waiting);
        }
        h.usize(self.pool.len());
        self.pool.iter().for_each(|&j| h.usize(j));
        h.usize(self.sink);
        h.usize(self.unmet_demand);
        h.usize(self.queue.len());
        for (key, ev) in &self.queue {
            h.f64(key.time);
            h.u64(key.priority as u64);
            h.usize(key.machine);
            h.usize(key.job);
            h.u64(event_code(ev.kind));
            h.opt_usize(ev.vehicle);
        }
        match &self.plan {
            Some(p) => {
                h.bool(true);
                for seq in &p.sequence {
                    hash_ops(&mut h, seq);
                }
            }
            None => h.bool(false),
        }
        h.finish()
    }
}

fn hash_ops(h: &mut StateHasher, ops: &[(usize, usize)]) {
    h.usize(ops.len());
    for &(j, k) in ops {
        h.usize(j);
        h.usize(k);
    }
}

fn hash_phase(h: &mut StateHasher, p: JobPhase) {
    let (code, arg) = match p {
        JobPhase::NotReleased => (0, 0),
        JobPhase::Awaiting { at } => (1, at),
        JobPhase::Pooled => (2, 0),
        JobPhase::InTransit { to } => (3, to),
        JobPhase::Queued { machine } => (4, machine),
        JobPhase::Processing { machine } => (5, machine),
        JobPhase::Done => (6, 0),
    };
    h.u64(code);
    h.usize(arg);
}

fn event_code(k: EventKind) -> u64 {
    match k {
        EventKind::Exo(ExoKind::JobRelease) => 0,
        EventKind::Exo(ExoKind::BreakdownStart) => 1,
        EventKind::Exo(ExoKind::BreakdownEnd) => 2,
        EventKind::Exo(ExoKind::DemandArrival) => 3,
        EventKind::Exo(ExoKind::MachineAdded) => 4,
        EventKind::ProcessEnd => 5,
        EventKind::SetupEnd => 6,
        EventKind::TransitArrive => 7,
        EventKind::VehicleArrive => 8,
    }
}
