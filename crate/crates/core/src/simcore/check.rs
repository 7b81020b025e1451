use crate::instance::Instance;
use crate::objectives::ScheduleRecord;

const EPS: f64 = 1e-9;

/// Feasibility problems in a finished schedule: missing operations, machine
/// overlaps, precedence or release violations, ineligible machines.
pub fn schedule_violations(inst: &Instance, rec: &ScheduleRecord) -> Vec<String> {
    let mut out = Vec::new();
    let mut per_machine: Vec<Vec<(f64, f64, usize, usize)>> = vec![Vec::new(); inst.n_machines()];
    for (j, job) in inst.jobs.iter().enumerate() {
        let jr = &rec.jobs[j];
        let mut last_end = f64::NEG_INFINITY;
        let mut spans: Vec<(f64, f64)> = Vec::new();
        for (k, op) in job.operations.iter().enumerate() {
            let o = &jr.ops[k];
            let (Some(s), Some(e), Some(m)) = (o.start, o.end, o.machine) else {
                out.push(format!("j{j} o{k} was never processed"));
                continue;
            };
            if !inst.machines[m].can_process(j, op.op_type) {
                out.push(format!("j{j} o{k} ran on ineligible machine {m}"));
            }
            if s + EPS < jr.release {
                out.push(format!("j{j} o{k} starts at {s} before release {}", jr.release));
            }
            if e + EPS < s {
                out.push(format!("j{j} o{k} ends before it starts"));
            }
            for &p in &op.predecessors {
                if let Some(pe) = jr.ops[p].end {
                    if s + EPS < pe {
                        out.push(format!("j{j} o{k} starts at {s} before predecessor o{p} ends at {pe}"));
                    }
                }
            }
            last_end = last_end.max(e);
            spans.push((s, e));
            per_machine[m].push((s, e, j, k));
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        if spans.windows(2).any(|w| w[1].0 + EPS < w[0].1) {
            out.push(format!("j{j} is processed on two machines at once"));
        }
        match jr.completion {
            Some(c) if (c - last_end).abs() > EPS => {
                out.push(format!("j{j} completion {c} differs from its last operation end {last_end}"))
            }
            None => out.push(format!("j{j} never completed")),
            _ => {}
        }
    }
    for (m, ops) in per_machine.iter_mut().enumerate() {
        ops.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let batching = inst.machines[m].batch.is_some();
        for w in ops.windows(2) {
            let (a, b) = (w[0], w[1]);
            let same_batch = batching && a.0 == b.0 && a.1 == b.1;
            if b.0 + EPS < a.1 && !same_batch {
                out.push(format!(
                    "machine {m}: j{} o{} overlaps j{} o{}",
                    a.2, a.3, b.2, b.3
                ));
            }
        }
    }
    out
}
