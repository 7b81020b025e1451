use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::sample::select;

use shopbench::agents::{rule_agent, run_episode, AgentSpec, PriorityRule};
use shopbench::instance::{derive_triplet, generate_instance, load_orlib, to_orlib, Instance, Shape};
use shopbench::mdp::{make_env, ActionSpec, BreakdownKind, EnvConfig, RewardSpec, Shaping};
use shopbench::notation::{
    parse_triplet, render_triplet, subsumes, validate, validate_text, Aggregation, ConstraintTag, MetricTerm,
    ObjectiveSpec, ProblemTriplet, SetupClass, SetupKind, EXCLUSIVE_PAIRS,
};
use shopbench::objectives::{evaluate_objective, job_metrics, makespan, MetricId, ScheduleRecord};
use shopbench::rules::SequencingRule;
use shopbench::simcore::{schedule_violations, Outcome};

fn beta_tag() -> impl Strategy<Value = ConstraintTag> {
    prop_oneof![
        5 => select(ConstraintTag::SIMPLE.to_vec()),
        1 => (1u32..9).prop_map(ConstraintTag::TrN),
    ]
}

fn term() -> impl Strategy<Value = MetricTerm> {
    (select(MetricId::ALL.to_vec()), select(Aggregation::ALL.to_vec()))
        .prop_filter("aggregation admitted", |(m, a)| m.admits(*a))
        .prop_map(|(m, a)| MetricTerm::new(m, a))
}

fn objective() -> impl Strategy<Value = ObjectiveSpec> {
    prop_oneof![
        3 => term().prop_map(ObjectiveSpec::Single),
        1 => prop::collection::vec(((1u32..20).prop_map(|w| w as f64 / 4.0), term()), 2..4)
            .prop_map(ObjectiveSpec::Scalarized),
        1 => prop::collection::vec(term(), 2..4).prop_map(ObjectiveSpec::ParetoSet),
    ]
}

fn triplet() -> impl Strategy<Value = ProblemTriplet> {
    let alpha = (select(SetupKind::ALL.to_vec()), prop::option::of(1u32..6)).prop_map(|(k, c)| match c {
        Some(c) if k != SetupKind::Single => SetupClass::with_count(k, c),
        _ => SetupClass::new(k),
    });
    (alpha, prop::collection::vec(beta_tag(), 0..6), objective()).prop_map(|(a, beta, g)| {
        // one tr(n) at most, and no mutually exclusive pair
        let mut set = BTreeSet::new();
        for t in beta {
            let clash = set.iter().any(|s: &ConstraintTag| {
                s.kind_key() == t.kind_key()
                    || matches!((s, t), (ConstraintTag::TrN(_) | ConstraintTag::TrInf, ConstraintTag::TrN(_) | ConstraintTag::TrInf))
                    || EXCLUSIVE_PAIRS.iter().any(|&(x, y)| (x == *s && y == t) || (y == *s && x == t))
            });
            if !clash {
                set.insert(t);
            }
        }
        ProblemTriplet::new(a, set, g)
    })
}

fn record_of(inst: &Instance, seed: u64) -> Option<ScheduleRecord> {
    let mut cfg = EnvConfig::new(
        BreakdownKind::OperationSequencing,
        ActionSpec::Direct,
        RewardSpec {
            shaping: Shaping::TerminalObjective,
            objective: ObjectiveSpec::makespan(),
        },
    );
    cfg.horizon = Some(1000.0);
    let mut agent = AgentSpec::Random.build(seed).unwrap();
    let mut env = make_env(inst, cfg, seed).ok()?;
    let ep = run_episode(&mut env, agent.as_mut()).unwrap();
    match ep.outcome {
        Outcome::Completed { .. } => Some(env.state().unwrap().record()),
        Outcome::Deadlock { .. } => None,
    }
}

const SIMULATED: [&str; 8] = [
    "Jm||C_max",
    "Jm|r_j^s,p_ji^s|C_max",
    "Fm|brkdwn^s|C_max",
    "FJc|p_ji^s|C_max",
    "FFc|S_jki|C_max",
    "Jm|recrc,vnops|C_max",
    "Pm|r_j|C_max",
    "FFc|block_in,block_out|C_max",
];

fn shop() -> impl Strategy<Value = (Instance, u64)> {
    (select(SIMULATED.to_vec()), 2usize..6, 1usize..4, any::<u64>(), any::<u64>()).prop_map(
        |(text, n, w, inst_seed, seed)| {
            let t = parse_triplet(text).unwrap();
            let per = if text.starts_with('F') && text.as_bytes()[1] != b'm' || text.starts_with('P') { 2 } else { 1 };
            let w = if text.starts_with('P') { 1 } else { w.max(2) };
            let mut shape = Shape::new(n, w, per, 1, 9);
            shape.due_tightness = 1.2;
            (generate_instance(&t, &shape, inst_seed).unwrap(), seed)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn triplets_round_trip_through_text(t in triplet()) {
        let text = render_triplet(&t);
        let back = parse_triplet(&text).unwrap();
        prop_assert_eq!(render_triplet(&back), text.clone());
        prop_assert_eq!(back, t, "{}", text);
    }

    #[test]
    fn validation_ignores_beta_order(t in triplet(), rot in 0usize..6) {
        let mut tags: Vec<String> = t.beta.iter().map(|b| b.token()).collect();
        if !tags.is_empty() {
            let k = rot % tags.len();
            tags.rotate_left(k);
            tags.reverse();
        }
        let rendered = render_triplet(&t);
        let parts: Vec<&str> = rendered.splitn(3, '|').collect();
        let text = format!("{}|{}|{}", parts[0], tags.join(","), parts[2]);
        let codes = |v: Vec<shopbench::notation::Violation>| {
            let mut c: Vec<(String, String)> = v.into_iter().map(|v| (v.code, v.message)).collect();
            c.sort();
            c
        };
        prop_assert_eq!(codes(validate_text(&text).unwrap()), codes(validate(&t)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_stays_within_the_requested_class(
        text in select(vec!["Jm||C_max", "Fm|prmu|C_max", "FJc|M_i^o|T_ave", "Om||C_max", "POm||C_max", "FPOc|fres|C_max", "Rm|r_j|C_max"]),
        n in 2usize..7,
        seed in any::<u64>(),
    ) {
        let t = parse_triplet(text).unwrap();
        let (w, per) = match t.alpha.kind {
            SetupKind::Rm => (1, 3),
            SetupKind::FJc | SetupKind::FPOc => (3, 2),
            _ => (3, 1),
        };
        let shape = Shape::new(n, w, per, 1, 9);
        let inst = generate_instance(&t, &shape, seed).unwrap();
        prop_assert!(subsumes(t.alpha, derive_triplet(&inst).alpha));
        let again = generate_instance(&t, &shape, seed).unwrap();
        prop_assert_eq!(inst.to_json(), again.to_json());
    }

    #[test]
    fn orlib_round_trips(n in 1usize..8, m in 1usize..6, seed in any::<u64>()) {
        let inst = generate_instance(&parse_triplet("Jm||C_max").unwrap(), &Shape::new(n, m, 1, 1, 99), seed).unwrap();
        let once = load_orlib(&to_orlib(&inst).unwrap()).unwrap();
        let twice = load_orlib(&to_orlib(&once).unwrap()).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.n_jobs(), n);
        for (a, b) in once.jobs.iter().zip(&inst.jobs) {
            let ops = |j: &shopbench::instance::Job| j.operations.iter().map(|o| (o.op_type, o.duration)).collect::<Vec<_>>();
            prop_assert_eq!(ops(a), ops(b));
        }
    }

    #[test]
    fn completed_schedules_conserve_operations((inst, seed) in shop()) {
        if let Some(rec) = record_of(&inst, seed) {
            prop_assert_eq!(schedule_violations(&inst, &rec), Vec::<String>::new());
            for (j, job) in rec.jobs.iter().enumerate() {
                prop_assert_eq!(job.ops.len(), inst.jobs[j].operations.len());
                prop_assert!(job.ops.iter().all(|o| o.start.is_some() && o.end.is_some()));
                let last = job.ops.iter().filter_map(|o| o.end).fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(job.completion, Some(last));
            }
        }
    }

    #[test]
    fn job_metric_identities_hold((inst, seed) in shop()) {
        if let Some(rec) = record_of(&inst, seed) {
            for m in job_metrics(&rec) {
                let (t, e, l, u) = (m.tardiness.unwrap(), m.earliness.unwrap(), m.lateness.unwrap(), m.unit_cost.unwrap());
                prop_assert_eq!(t * e, 0.0);
                prop_assert_eq!(t - e, l);
                prop_assert_eq!(u == 1.0, t > 0.0);
                prop_assert!(m.idle.unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn makespan_respects_the_work_content_bound(
        text in select(vec!["Jm|r_j|C_max", "FJc||C_max", "Qm||C_max", "Fm||C_max"]),
        n in 2usize..6,
        inst_seed in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let t = parse_triplet(text).unwrap();
        let shape = match t.alpha.kind {
            SetupKind::Qm => Shape::new(n, 1, 3, 1, 9),
            SetupKind::FJc => Shape::new(n, 3, 2, 1, 9),
            _ => Shape::new(n, 3, 1, 1, 9),
        };
        let inst = generate_instance(&t, &shape, inst_seed).unwrap();
        let rec = record_of(&inst, seed).unwrap();
        let bound = (0..inst.n_jobs())
            .map(|j| {
                let work: f64 = (0..inst.jobs[j].operations.len())
                    .map(|k| inst.eligible_machines(j, k).into_iter().map(|m| inst.nominal_duration(j, k, m)).fold(f64::INFINITY, f64::min))
                    .sum();
                rec.jobs[j].release + work
            })
            .fold(0.0, f64::max);
        prop_assert!(makespan(&rec).unwrap() >= bound - 1e-9);
    }

    #[test]
    fn symmetric_objectives_ignore_job_order(
        (inst, seed) in shop(),
        perm_seed in any::<u64>(),
        spec in select(vec!["C_max", "sum_T_j", "T_ave", "max_F_j", "U_ave", "sum_E_j"]),
    ) {
        if let Some(rec) = record_of(&inst, seed) {
            let spec: ObjectiveSpec = spec.parse().unwrap();
            let mut shuffled = rec.clone();
            shopbench::rng::RngStream::new(perm_seed, "perm").shuffle(&mut shuffled.jobs);
            let a = evaluate_objective(&rec, &spec, rec.horizon).unwrap().scalar().unwrap();
            let b = evaluate_objective(&shuffled, &spec, rec.horizon).unwrap().scalar().unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn agents_pick_legal_actions((inst, seed) in shop(), which in 0usize..3) {
        let mut cfg = EnvConfig::new(
            BreakdownKind::OperationSequencing,
            ActionSpec::Direct,
            RewardSpec { shaping: Shaping::TerminalObjective, objective: ObjectiveSpec::makespan() },
        );
        cfg.horizon = Some(1000.0);
        let mut agent = match which {
            0 => AgentSpec::Random.build(seed).unwrap(),
            1 => Box::new(rule_agent(PriorityRule::Sequencing(SequencingRule::Spt))),
            _ => Box::new(rule_agent(PriorityRule::Sequencing(SequencingRule::Edd))),
        };
        let mut env = make_env(&inst, cfg, seed).unwrap();
        // run_episode rejects any action outside the legal set
        prop_assert!(run_episode(&mut env, agent.as_mut()).is_ok());
    }
}

#[test]
fn subsumption_is_a_partial_order() {
    let mut classes: Vec<SetupClass> = SetupKind::ALL.iter().map(|&k| SetupClass::new(k)).collect();
    classes.truncate(11);
    for &a in &classes {
        assert!(subsumes(a, a));
        for &b in &classes {
            if a != b && subsumes(a, b) {
                assert!(!subsumes(b, a), "{a:?} and {b:?}");
            }
            for &c in &classes {
                if subsumes(a, b) && subsumes(b, c) {
                    assert!(subsumes(a, c), "{a:?} {b:?} {c:?}");
                }
            }
        }
    }
}
