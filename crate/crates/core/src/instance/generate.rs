use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    validate_instance, BatchSpec, BreakdownProcess, Instance, InstanceError, Job, Machine,
    Maintenance, Operation, ReleaseProcess, SetupTimes, Speed, StochasticSpec, TransportMode,
    TransportSpec, SCHEMA_VERSION,
};
use crate::notation::{ConstraintTag as C, ProblemTriplet, SetupKind};
use crate::rng::{Distribution, RngStream, INSTANCE};

fn default_tightness() -> f64 {
    1.5
}

/// Size parameters for [`generate_instance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub n_jobs: usize,
    pub work_centers: usize,
    #[serde(default = "one")]
    pub machines_per_wc: usize,
    /// Inclusive integer range for base durations.
    pub duration_range: (u32, u32),
    /// `d_j = r_j + tightness * sum_i p_ji`.
    #[serde(default = "default_tightness")]
    pub due_tightness: f64,
}

fn one() -> usize {
    1
}

impl Shape {
    pub fn new(n_jobs: usize, work_centers: usize, machines_per_wc: usize, lo: u32, hi: u32) -> Self {
        Shape {
            n_jobs,
            work_centers,
            machines_per_wc,
            duration_range: (lo, hi),
            due_tightness: default_tightness(),
        }
    }
}

fn mismatch(msg: impl Into<String>) -> InstanceError {
    InstanceError::ShapeMismatch(msg.into())
}

fn int_matrix(rng: &mut RngStream, rows: usize, lo: i64, hi: i64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|a| {
            (0..rows)
                .map(|b| if a == b { 0.0 } else { rng.range_inclusive(lo, hi) as f64 })
                .collect()
        })
        .collect()
}

/// Seeded random instance for a triplet. The output is a pure function of
/// `(t, shape, seed)`.
pub fn generate_instance(t: &ProblemTriplet, shape: &Shape, seed: u64) -> Result<Instance, InstanceError> {
    let kind = t.alpha.kind;
    let (lo, hi) = shape.duration_range;
    if shape.n_jobs == 0 || shape.work_centers == 0 || shape.machines_per_wc == 0 {
        return Err(mismatch("counts must be positive"));
    }
    if lo == 0 || lo > hi {
        return Err(mismatch("duration range must satisfy 1 <= lo <= hi"));
    }
    let parallel = matches!(kind, SetupKind::Pm | SetupKind::Qm | SetupKind::Rm);
    if (parallel || kind == SetupKind::Single) && shape.work_centers != 1 {
        return Err(mismatch(format!("{} has a single work center", kind.token())));
    }
    if shape.machines_per_wc > 1 && !(parallel || kind.is_flexible()) {
        return Err(mismatch(format!(
            "{} has one machine per work center",
            kind.token()
        )));
    }
    if let Some(c) = t.alpha.count {
        let expected = if parallel { shape.machines_per_wc } else { shape.work_centers };
        if c as usize != expected {
            return Err(mismatch(format!("alpha count {c} but shape gives {expected}")));
        }
    }

    let mut rng = RngStream::new(seed, INSTANCE);
    let n = shape.n_jobs;
    let w = shape.work_centers;
    let mpw = shape.machines_per_wc;

    // machines
    let mut machines = Vec::new();
    for wc in 0..w {
        for _ in 0..mpw {
            machines.push(Machine::simple(wc));
        }
    }
    let m = machines.len();
    match kind {
        SetupKind::Qm => {
            for mc in &mut machines {
                mc.speed = Speed::Uniform([0.5, 1.0, 2.0][rng.below(3)]);
            }
        }
        SetupKind::Rm => {
            for mc in &mut machines {
                mc.speed = Speed::PerJob((0..n).map(|_| [0.5, 1.0, 2.0][rng.below(3)]).collect());
            }
        }
        _ => {}
    }

    // jobs
    let mut jobs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut route: Vec<usize> = (0..w).collect();
        match kind {
            SetupKind::Fm | SetupKind::FFc | SetupKind::Single => {}
            SetupKind::Pm | SetupKind::Qm | SetupKind::Rm => route = vec![0],
            _ => rng.shuffle(&mut route),
        }
        if t.has(C::Recrc) && rng.below(2) == 0 {
            let again = route[rng.below(route.len())];
            route.push(again);
        }
        if t.has(C::Vnops) && route.len() > 1 && rng.below(2) == 0 {
            route.remove(rng.below(route.len()));
        }
        let operations = route
            .iter()
            .enumerate()
            .map(|(k, &ty)| {
                let predecessors = match kind {
                    SetupKind::Om => vec![],
                    SetupKind::POm | SetupKind::FPOc => {
                        if k > 0 && rng.below(2) == 0 {
                            vec![k - 1]
                        } else {
                            vec![]
                        }
                    }
                    _ if k > 0 => vec![k - 1],
                    _ => vec![],
                };
                Operation {
                    op_type: ty,
                    duration: rng.range_inclusive(lo as i64, hi as i64) as f64,
                    predecessors,
                }
            })
            .collect();
        jobs.push(Job {
            operations,
            release: 0.0,
            due: None,
            family: None,
        });
    }

    // keep partial orders from collapsing into the more general open shop
    if matches!(kind, SetupKind::POm | SetupKind::FPOc)
        && jobs.iter().all(|j| j.operations.iter().all(|o| o.predecessors.is_empty()))
    {
        if let Some(job) = jobs.iter_mut().find(|j| j.operations.len() > 1) {
            job.operations[1].predecessors = vec![0];
        }
    }

    let mean_p = 0.5 * (lo + hi) as f64;
    let total_work: f64 = jobs.iter().map(|j| j.total_work()).sum();
    let load_span = (total_work / m as f64).max(1.0);

    // capabilities and eligibility
    if t.has(C::MiO) && (kind.is_flexible() || parallel) && w > 1 {
        for mc in &mut machines {
            if rng.below(3) == 0 {
                let extra = rng.below(w);
                mc.capabilities.insert(extra);
            }
        }
    }
    if t.has(C::Mi) && m > 1 {
        for mc in machines.iter_mut().skip(1) {
            let admitted: BTreeSet<usize> = (0..n).filter(|_| rng.below(2) == 0).collect();
            mc.eligible_jobs = Some(admitted);
        }
    }

    // setups
    let setups = if t.has(C::Sjki) {
        SetupTimes::JobMachine((0..m).map(|_| int_matrix(&mut rng, n, 1, lo as i64)).collect())
    } else if t.has(C::Sjk) {
        SetupTimes::Job(int_matrix(&mut rng, n, 1, lo as i64))
    } else if t.has(C::Fmls) {
        let families = 3.min(n);
        for job in &mut jobs {
            job.family = Some(rng.below(families));
        }
        SetupTimes::Family(int_matrix(&mut rng, families, 1, lo as i64))
    } else {
        SetupTimes::None
    };

    // buffers, batches, capacity changes
    if t.has(C::BlockIn) {
        for mc in &mut machines {
            mc.input_buffer = Some(2);
        }
    }
    if t.has(C::BlockOut) {
        for mc in &mut machines {
            mc.output_buffer = Some(1);
        }
    }
    if t.has(C::Batch) {
        machines[0].batch = Some(BatchSpec::Fixed {
            size: 2,
            duration: hi as f64,
        });
    } else if t.has(C::Dbatch) {
        machines[0].batch = Some(BatchSpec::Dynamic { capacity: 3 });
    }
    if t.has(C::Fres) {
        let last = m - 1;
        machines[last].available_from = (0.25 * load_span).round().max(1.0);
    }

    // releases and stochastic processes
    let mut stochastic = StochasticSpec::default();
    if t.has(C::RjS) {
        let gap = (total_work / n as f64 / m as f64).max(1.0);
        stochastic.release = Some(ReleaseProcess::Interarrival(Distribution::Exponential {
            rate: 1.0 / gap,
        }));
    } else if t.has(C::Rj) {
        let span = (0.5 * load_span).round() as i64;
        for job in &mut jobs {
            job.release = rng.range_inclusive(0, span.max(1)) as f64;
        }
    }
    if t.has(C::PjiS) {
        stochastic.duration_factor = Some(Distribution::Uniform {
            low: 0.75,
            high: 1.25,
        });
    }
    let mut maintenance = Vec::new();
    if t.has(C::BrkdwnS) {
        for i in 0..m {
            stochastic.breakdowns.push(BreakdownProcess {
                machine: i,
                uptime: Distribution::Exponential {
                    rate: 1.0 / (10.0 * mean_p),
                },
                repair: Distribution::Uniform {
                    low: 0.5 * mean_p,
                    high: mean_p,
                },
            });
        }
    } else if t.has(C::Brkdwn) {
        for i in 0..m {
            maintenance.push(Maintenance {
                machine: i,
                start: rng.range_inclusive(1, load_span.round() as i64) as f64,
                duration: lo as f64,
            });
        }
    }
    let mut demand = Vec::new();
    if t.has(C::DmdJS) {
        stochastic.demand = Some(Distribution::Exponential {
            rate: n as f64 / (2.0 * load_span),
        });
    } else if t.has(C::DmdJ) {
        let mut at = 0.0;
        for _ in 0..n {
            at += rng.range_inclusive(1, (2.0 * load_span / n as f64).ceil() as i64) as f64;
            demand.push(at);
        }
    }

    // transport
    let mode = match (t.fleet_size(), t.has(C::TrInf)) {
        (Some(k), _) => TransportMode::Fleet(k),
        (None, true) => TransportMode::Infinite,
        _ => TransportMode::None,
    };
    let transport = if mode == TransportMode::None {
        TransportSpec::default()
    } else {
        let size = m + 1;
        let mut travel = vec![vec![0.0; size]; size];
        for a in 0..size {
            for b in a + 1..size {
                let v = rng.range_inclusive(1, 3) as f64;
                travel[a][b] = v;
                travel[b][a] = v;
            }
        }
        TransportSpec {
            mode,
            travel,
            home: vec![m; mode_fleet(mode)],
        }
    };

    let mut inst = Instance {
        schema_version: SCHEMA_VERSION,
        name: None,
        triplet: t.clone(),
        jobs,
        machines,
        transport,
        stochastic,
        setups,
        maintenance,
        demand,
    };
    for j in 0..n {
        let r = inst.expected_release(j);
        let work = inst.jobs[j].total_work();
        inst.jobs[j].due = Some(r + shape.due_tightness * work);
    }

    let violations = validate_instance(&inst);
    if violations.is_empty() {
        Ok(inst)
    } else {
        Err(InstanceError::Invalid(violations))
    }
}

fn mode_fleet(mode: TransportMode) -> usize {
    match mode {
        TransportMode::Fleet(k) => k as usize,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::derive_triplet;
    use crate::notation::{parse_triplet, subsumes};

    #[test]
    fn deterministic() {
        let t = parse_triplet("Jm||C_max").unwrap();
        let s = Shape::new(3, 3, 1, 1, 9);
        let a = generate_instance(&t, &s, 42).unwrap();
        let b = generate_instance(&t, &s, 42).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn flexible_capabilities_are_covered_twice() {
        let t = parse_triplet("FJc|S_jk|T_ave").unwrap();
        let inst = generate_instance(&t, &Shape::new(4, 2, 2, 1, 9), 7).unwrap();
        for j in 0..inst.n_jobs() {
            for k in 0..inst.jobs[j].operations.len() {
                assert!(inst.eligible_machines(j, k).len() >= 2);
            }
        }
    }

    #[test]
    fn seeds_change_durations() {
        let t = parse_triplet("Jm||C_max").unwrap();
        let s = Shape::new(3, 3, 1, 1, 9);
        let durations = |seed| {
            let inst = generate_instance(&t, &s, seed).unwrap();
            let mut d: Vec<i64> = inst
                .jobs
                .iter()
                .flat_map(|j| j.operations.iter().map(|o| o.duration as i64))
                .collect();
            d.sort();
            d
        };
        assert_ne!(durations(42), durations(43));
    }

    #[test]
    fn shape_must_fit() {
        let t = parse_triplet("Jm||C_max").unwrap();
        assert!(matches!(
            generate_instance(&t, &Shape::new(3, 3, 2, 1, 9), 1),
            Err(InstanceError::ShapeMismatch(_))
        ));
        let p = parse_triplet("Pm||C_max").unwrap();
        assert!(generate_instance(&p, &Shape::new(3, 2, 2, 1, 9), 1).is_err());
        assert!(generate_instance(&p, &Shape::new(3, 1, 3, 1, 9), 1).is_ok());
    }

    #[test]
    fn many_triplets_generate_valid_instances() {
        let cases = [
            ("1||sum_F_j", (4, 1, 1)),
            ("Pm|M_i|C_max", (5, 1, 3)),
            ("Qm||F_ave", (5, 1, 3)),
            ("Rm|r_j|C_max", (5, 1, 2)),
            ("Fm|prmu|C_max", (4, 3, 1)),
            ("FFc|block_in,block_out|C_max", (4, 3, 2)),
            ("Jm|recrc,vnops|C_max", (4, 3, 1)),
            ("FJc|M_i^o,fmls,dbatch|T_ave", (4, 3, 2)),
            ("Om||C_max", (3, 3, 1)),
            ("POm|batch|C_max", (3, 3, 1)),
            ("FPOc|S_jki,fres|C_max", (3, 2, 2)),
            ("Jm|r_j^s,p_ji^s,brkdwn^s|T_ave", (4, 3, 1)),
            ("Jm|brkdwn,dmd_j|C_max", (4, 3, 1)),
            ("Jm|dmd_j^s|C_max", (4, 3, 1)),
            ("FJc|tr(2)|0.5*C_max+0.5*Utl_tr_ave", (4, 2, 2)),
            ("Jm|tr(inf)|C_max", (3, 3, 1)),
        ];
        for (text, (n, w, k)) in cases {
            let t = parse_triplet(text).unwrap();
            for seed in 0..5 {
                let inst = generate_instance(&t, &Shape::new(n, w, k, 1, 9), seed)
                    .unwrap_or_else(|e| panic!("{text} seed {seed}: {e}"));
                let derived = derive_triplet(&inst);
                assert!(subsumes(t.alpha, derived.alpha), "{text}");
                let again = Instance::from_json(&inst.to_json()).unwrap();
                assert_eq!(again, inst);
            }
        }
    }
}
