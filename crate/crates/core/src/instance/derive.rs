use std::collections::BTreeSet;

use super::{BatchSpec, Instance, SetupTimes, Speed, TransportMode};
use crate::notation::{ConstraintTag, ProblemTriplet, SetupClass, SetupKind};

/// Precedence shape shared by all jobs.
#[derive(PartialEq)]
enum Order {
    /// One operation per job.
    Single,
    /// Each job is a chain `0 -> 1 -> ...`.
    Chain,
    /// No precedence at all.
    Free,
    Partial,
}

fn order_of(inst: &Instance) -> Order {
    if inst.jobs.iter().all(|j| j.operations.len() <= 1) {
        return Order::Single;
    }
    let chain = inst.jobs.iter().all(|j| {
        j.operations
            .iter()
            .enumerate()
            .all(|(k, o)| if k == 0 { o.predecessors.is_empty() } else { o.predecessors == [k - 1] })
    });
    if chain {
        return Order::Chain;
    }
    if inst
        .jobs
        .iter()
        .all(|j| j.operations.iter().all(|o| o.predecessors.is_empty()))
    {
        return Order::Free;
    }
    Order::Partial
}

/// True when some operation can go to more than one machine.
fn flexible(inst: &Instance) -> bool {
    inst.jobs.iter().enumerate().any(|(j, job)| {
        (0..job.operations.len()).any(|k| inst.eligible_machines(j, k).len() > 1)
    })
}

pub(crate) fn derive_alpha(inst: &Instance) -> SetupClass {
    let flex = flexible(inst);
    let kind = match order_of(inst) {
        Order::Single => {
            let types: BTreeSet<usize> = inst
                .jobs
                .iter()
                .flat_map(|j| j.operations.iter().map(|o| o.op_type))
                .collect();
            if inst.machines.len() <= 1 {
                SetupKind::Single
            } else if types.len() > 1 {
                // single-operation jobs of different types on distinct machines
                if flex {
                    SetupKind::FJc
                } else {
                    SetupKind::Jm
                }
            } else if inst.machines.iter().any(|m| matches!(m.speed, Speed::PerJob(_))) {
                SetupKind::Rm
            } else if inst
                .machines
                .windows(2)
                .any(|w| w[0].speed.for_job(0) != w[1].speed.for_job(0))
            {
                SetupKind::Qm
            } else {
                SetupKind::Pm
            }
        }
        Order::Chain => {
            let first: Vec<usize> = inst.jobs[0].operations.iter().map(|o| o.op_type).collect();
            let unique: BTreeSet<usize> = first.iter().copied().collect();
            let same_route = unique.len() == first.len()
                && inst
                    .jobs
                    .iter()
                    .all(|j| j.operations.iter().map(|o| o.op_type).eq(first.iter().copied()));
            match (same_route, flex) {
                (true, false) => SetupKind::Fm,
                (true, true) => SetupKind::FFc,
                (false, false) => SetupKind::Jm,
                (false, true) => SetupKind::FJc,
            }
        }
        Order::Free if !flex => SetupKind::Om,
        Order::Partial if !flex => SetupKind::POm,
        _ => SetupKind::FPOc,
    };
    SetupClass::new(kind)
}

/// Constraint tags evidenced by the instance fields.
pub(crate) fn derive_beta(inst: &Instance) -> BTreeSet<ConstraintTag> {
    use ConstraintTag as C;
    let mut beta = BTreeSet::new();
    if inst.machines.iter().any(|m| m.input_buffer.is_some()) {
        beta.insert(C::BlockIn);
    }
    if inst.machines.iter().any(|m| m.output_buffer.is_some()) {
        beta.insert(C::BlockOut);
    }
    let all_types: BTreeSet<usize> = inst
        .jobs
        .iter()
        .flat_map(|j| j.operations.iter().map(|o| o.op_type))
        .collect();
    let mut recirculates = false;
    let mut skips = false;
    for job in &inst.jobs {
        let types: Vec<usize> = job.operations.iter().map(|o| o.op_type).collect();
        let unique: BTreeSet<usize> = types.iter().copied().collect();
        recirculates |= unique.len() != types.len();
        skips |= unique != all_types;
    }
    let single_op = inst.jobs.iter().all(|j| j.operations.len() <= 1);
    if recirculates {
        beta.insert(C::Recrc);
    }
    if skips && !single_op {
        beta.insert(C::Vnops);
    }
    match inst.setups {
        SetupTimes::None => {}
        SetupTimes::Family(_) => {
            beta.insert(C::Fmls);
        }
        SetupTimes::Job(_) => {
            beta.insert(C::Sjk);
        }
        SetupTimes::JobMachine(_) => {
            beta.insert(C::Sjki);
        }
    }
    if inst.machines.iter().any(|m| m.eligible_jobs.is_some()) {
        beta.insert(C::Mi);
    }
    if inst
        .machines
        .iter()
        .any(|m| m.capabilities.iter().ne([m.work_center].iter()))
    {
        beta.insert(C::MiO);
    }
    for m in &inst.machines {
        match m.batch {
            Some(BatchSpec::Fixed { .. }) => {
                beta.insert(C::Batch);
            }
            Some(BatchSpec::Dynamic { .. }) => {
                beta.insert(C::Dbatch);
            }
            None => {}
        }
    }
    if inst.machines.iter().any(|m| m.available_from > 0.0) {
        beta.insert(C::Fres);
    }
    if inst.stochastic.release.is_some() {
        beta.insert(C::RjS);
    } else if inst.jobs.iter().any(|j| j.release > 0.0) {
        beta.insert(C::Rj);
    }
    if !inst.stochastic.breakdowns.is_empty() {
        beta.insert(C::BrkdwnS);
    } else if !inst.maintenance.is_empty() {
        beta.insert(C::Brkdwn);
    }
    if inst.stochastic.demand.is_some() {
        beta.insert(C::DmdJS);
    } else if !inst.demand.is_empty() {
        beta.insert(C::DmdJ);
    }
    if inst.stochastic.duration_factor.is_some() {
        beta.insert(C::PjiS);
    }
    match inst.transport.mode {
        TransportMode::None => {}
        TransportMode::Infinite => {
            beta.insert(C::TrInf);
        }
        TransportMode::Fleet(n) => {
            beta.insert(C::TrN(n));
        }
    }
    beta
}

/// Most specific classification consistent with the instance structure. Tags
/// that describe policy rather than data (prmu, nwt, prmp, prec) and the
/// objective are carried over from the declared triplet.
pub fn derive_triplet(inst: &Instance) -> ProblemTriplet {
    let mut beta = derive_beta(inst);
    for tag in [ConstraintTag::Prmu, ConstraintTag::Nwt, ConstraintTag::Prmp, ConstraintTag::Prec] {
        if inst.triplet.has(tag) {
            beta.insert(tag);
        }
    }
    ProblemTriplet {
        alpha: derive_alpha(inst),
        beta,
        gamma: inst.triplet.gamma.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{load_orlib, Machine};
    use crate::notation::render_triplet;

    #[test]
    fn ft06_is_a_job_shop() {
        let inst = load_orlib(crate::instance::FT06).unwrap();
        assert_eq!(render_triplet(&derive_triplet(&inst)), "Jm||C_max");
    }

    #[test]
    fn identical_routes_make_a_flow_shop() {
        let inst = load_orlib("3 2\n0 3 1 2\n0 2 1 4\n0 1 1 1").unwrap();
        assert_eq!(derive_triplet(&inst).alpha.kind, SetupKind::Fm);
    }

    #[test]
    fn no_precedence_is_an_open_shop() {
        let mut inst = load_orlib("2 2\n0 3 1 2\n1 2 0 4").unwrap();
        for j in &mut inst.jobs {
            for o in &mut j.operations {
                o.predecessors.clear();
            }
        }
        assert_eq!(derive_triplet(&inst).alpha.kind, SetupKind::Om);
        inst.jobs[0].operations[1].predecessors = vec![0];
        assert_eq!(derive_triplet(&inst).alpha.kind, SetupKind::POm);
        inst.machines.push(Machine {
            work_center: 0,
            ..Machine::simple(0)
        });
        assert_eq!(derive_triplet(&inst).alpha.kind, SetupKind::FPOc);
    }

    #[test]
    fn parallel_machines() {
        let mut inst = load_orlib("2 1\n0 3\n0 2").unwrap();
        assert_eq!(derive_triplet(&inst).alpha.kind, SetupKind::Single);
        inst.machines.push(Machine::simple(0));
        assert_eq!(derive_triplet(&inst).alpha.kind, SetupKind::Pm);
        inst.machines[1].speed = Speed::Uniform(2.0);
        assert_eq!(derive_triplet(&inst).alpha.kind, SetupKind::Qm);
        inst.machines[1].speed = Speed::PerJob(vec![2.0, 1.0]);
        assert_eq!(derive_triplet(&inst).alpha.kind, SetupKind::Rm);
    }

    #[test]
    fn recirculation_and_skips() {
        let inst = load_orlib("2 3\n0 3 1 2 0 1\n2 2 1 4 0 1").unwrap();
        let beta = derive_triplet(&inst).beta;
        assert!(beta.contains(&ConstraintTag::Recrc));
        assert!(beta.contains(&ConstraintTag::Vnops));
    }
}
