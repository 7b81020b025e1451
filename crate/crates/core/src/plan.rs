//! Standing plans for plan-following controls and the rescheduling hook.

use serde::{Deserialize, Serialize};

use crate::instance::Instance;
use crate::rules::SequencingRule;
use crate::simcore::{JobPhase, SimState};

/// A complete schedule for the not-yet-started operations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Planned `(job, op)` order per machine.
    pub sequence: Vec<Vec<(usize, usize)>>,
    /// Planned machine per `[job][op]`.
    pub assignment: Vec<Vec<Option<usize>>>,
    /// Planned processing start per `[job][op]`.
    pub start: Vec<Vec<Option<f64>>>,
    pub makespan: f64,
}

/// Recomputes a plan from the current state. `params` is the solver
/// parameter vector chosen by the agent.
pub trait Planner: Send + Sync {
    fn name(&self) -> String;
    fn plan(&self, state: &SimState, params: &[f64]) -> Plan;
}

/// Giffler-Thompson list scheduling on expected durations. `delta` moves
/// between non-delay (0) and active (1) schedule generation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ListScheduler {
    pub rule: SequencingRule,
    pub delta: f64,
}

impl Default for ListScheduler {
    fn default() -> Self {
        ListScheduler {
            rule: SequencingRule::Spt,
            delta: 0.0,
        }
    }
}

impl ListScheduler {
    /// Parameters `[rule_index, delta]`; missing entries keep the defaults.
    pub fn with_params(&self, params: &[f64]) -> ListScheduler {
        let mut out = *self;
        if let Some(&r) = params.first() {
            let i = r.round().clamp(0.0, (SequencingRule::ALL.len() - 1) as f64) as usize;
            out.rule = SequencingRule::ALL[i];
        }
        if let Some(&d) = params.get(1) {
            out.delta = if d.is_finite() { d.clamp(0.0, 1.0) } else { 0.0 };
        }
        out
    }
}

#[derive(Clone, Copy)]
struct Pair {
    job: usize,
    op: usize,
    machine: usize,
    est: f64,
    ect: f64,
}

fn mean_factor(inst: &Instance) -> f64 {
    inst.stochastic
        .duration_factor
        .as_ref()
        .map(|d| d.mean())
        .unwrap_or(1.0)
}

fn mean_repair(inst: &Instance, machine: usize) -> f64 {
    inst.stochastic
        .breakdowns
        .iter()
        .find(|b| b.machine == machine)
        .map(|b| b.repair.mean())
        .unwrap_or(0.0)
}

impl Planner for ListScheduler {
    fn name(&self) -> String {
        format!("gt:{}:{}", self.rule, self.delta)
    }

    fn plan(&self, state: &SimState, params: &[f64]) -> Plan {
        let cfg = self.with_params(params);
        let inst = state.instance();
        let t = state.time();
        let n = inst.n_jobs();
        let m = inst.n_machines();
        let factor = mean_factor(inst);

        let mut mfree = vec![t; m];
        let mut last: Vec<Option<usize>> = (0..m).map(|i| state.last_job(i)).collect();
        for i in 0..m {
            let mach = &inst.machines[i];
            if mach.available_from > t {
                mfree[i] = mach.available_from;
            }
            let activity = state.activity(i);
            let mut free = mfree[i] + state.remaining_activity(i);
            if activity == crate::simcore::Activity::Down {
                free += mean_repair(inst, i);
            }
            mfree[i] = free;
            if let crate::simcore::Activity::Setup { ops, .. } | crate::simcore::Activity::Busy { ops, .. } =
                activity
            {
                last[i] = ops.first().map(|o| o.0);
            }
        }

        let mut scheduled: Vec<Vec<bool>> = (0..n)
            .map(|j| (0..inst.jobs[j].operations.len()).map(|k| state.op_started(j, k)).collect())
            .collect();
        let mut jready = vec![t; n];
        let mut arrival = vec![t; n];
        let mut bound: Vec<Vec<Option<usize>>> = (0..n).map(|j| state.job_route(j).to_vec()).collect();
        for j in 0..n {
            match state.job_phase(j) {
                JobPhase::NotReleased => {
                    let r = inst.expected_release(j).max(t);
                    jready[j] = r;
                    arrival[j] = r;
                }
                JobPhase::Processing { machine } => {
                    jready[j] = t + state.remaining_activity(machine);
                    arrival[j] = jready[j];
                }
                JobPhase::InTransit { .. } => arrival[j] = t,
                _ => arrival[j] = state.job_since(j),
            }
            if let Some((k, mm)) = state.job_dest(j) {
                bound[j][k] = Some(mm);
            }
            if let JobPhase::Queued { machine } = state.job_phase(j) {
                for &(jj, k) in state.input_buffer(machine) {
                    if jj == j {
                        bound[j][k] = Some(machine);
                    }
                }
            }
        }

        let mut plan = Plan {
            sequence: vec![Vec::new(); m],
            assignment: (0..n).map(|j| vec![None; inst.jobs[j].operations.len()]).collect(),
            start: (0..n).map(|j| vec![None; inst.jobs[j].operations.len()]).collect(),
            makespan: t,
        };

        loop {
            let mut pairs: Vec<Pair> = Vec::new();
            for j in 0..n {
                for (k, op) in inst.jobs[j].operations.iter().enumerate() {
                    if scheduled[j][k] || !op.predecessors.iter().all(|&p| scheduled[j][p]) {
                        continue;
                    }
                    let machines: Vec<usize> = match bound[j][k] {
                        Some(mm) => vec![mm],
                        None => inst.eligible_machines(j, k),
                    };
                    for mm in machines {
                        let est = mfree[mm].max(jready[j]);
                        let ect = est
                            + inst.setup_time(mm, last[mm], j)
                            + inst.nominal_duration(j, k, mm) * factor;
                        pairs.push(Pair {
                            job: j,
                            op: k,
                            machine: mm,
                            est,
                            ect,
                        });
                    }
                }
            }
            if pairs.is_empty() {
                break;
            }
            let (mstar, mut conflict): (usize, Vec<Pair>) = if cfg.delta <= 0.0 {
                let min_est = pairs.iter().map(|p| p.est).fold(f64::INFINITY, f64::min);
                let mstar = pairs
                    .iter()
                    .filter(|p| p.est == min_est)
                    .map(|p| p.machine)
                    .min()
                    .expect("nonempty");
                let c = pairs
                    .iter()
                    .filter(|p| p.machine == mstar && p.est == min_est)
                    .copied()
                    .collect();
                (mstar, c)
            } else {
                let crit = pairs
                    .iter()
                    .min_by(|a, b| {
                        a.ect
                            .total_cmp(&b.ect)
                            .then(a.machine.cmp(&b.machine))
                            .then((a.job, a.op).cmp(&(b.job, b.op)))
                    })
                    .copied()
                    .expect("nonempty");
                let on_m: Vec<Pair> = pairs.iter().filter(|p| p.machine == crit.machine).copied().collect();
                let min_est = on_m.iter().map(|p| p.est).fold(f64::INFINITY, f64::min);
                let threshold = min_est + cfg.delta * (crit.ect - min_est);
                let c = on_m
                    .into_iter()
                    .filter(|p| p.est < crit.ect && p.est <= threshold)
                    .collect();
                (crit.machine, c)
            };
            conflict.sort_by_key(|p| (p.job, p.op));
            let key = |p: &Pair| match cfg.rule {
                SequencingRule::Spt => inst.nominal_duration(p.job, p.op, mstar),
                SequencingRule::Lpt => -inst.nominal_duration(p.job, p.op, mstar),
                SequencingRule::Edd => inst.jobs[p.job].due.unwrap_or(f64::INFINITY),
                SequencingRule::Fifo => arrival[p.job],
                SequencingRule::Lifo => -arrival[p.job],
            };
            let mut best = 0;
            for i in 1..conflict.len() {
                if key(&conflict[i]) < key(&conflict[best]) {
                    best = i;
                }
            }
            let p = conflict[best];
            let start = p.est + inst.setup_time(mstar, last[mstar], p.job);
            let end = p.ect;
            scheduled[p.job][p.op] = true;
            mfree[mstar] = end;
            last[mstar] = Some(p.job);
            jready[p.job] = end;
            arrival[p.job] = end;
            plan.sequence[mstar].push((p.job, p.op));
            plan.assignment[p.job][p.op] = Some(mstar);
            plan.start[p.job][p.op] = Some(start);
            plan.makespan = plan.makespan.max(end);
        }
        plan
    }
}
