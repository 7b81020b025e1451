use std::collections::BTreeSet;

use super::*;
use crate::instance::{generate_instance, Job, Machine, Operation, Shape, TransportMode, SCHEMA_VERSION};
use crate::notation::Aggregation;
use crate::objectives::MetricId;
use crate::rng::RngStream;
use crate::simcore::{schedule_violations, SequencingControl, Step};

fn shop(triplet: &str, jobs: &[&[(usize, f64)]], n_machines: usize) -> Instance {
    Instance {
        schema_version: SCHEMA_VERSION,
        name: None,
        triplet: triplet.parse().unwrap(),
        jobs: jobs
            .iter()
            .map(|ops| Job {
                operations: ops
                    .iter()
                    .enumerate()
                    .map(|(k, &(op_type, duration))| Operation {
                        op_type,
                        duration,
                        predecessors: if k > 0 { vec![k - 1] } else { vec![] },
                    })
                    .collect(),
                release: 0.0,
                due: None,
                family: None,
            })
            .collect(),
        machines: (0..n_machines).map(Machine::simple).collect(),
        transport: Default::default(),
        stochastic: Default::default(),
        setups: Default::default(),
        maintenance: vec![],
        demand: vec![],
    }
}

fn makespan_reward() -> RewardSpec {
    RewardSpec {
        shaping: Shaping::TerminalObjective,
        objective: ObjectiveSpec::makespan(),
    }
}

fn tardiness(shaping: Shaping) -> RewardSpec {
    RewardSpec {
        shaping,
        objective: ObjectiveSpec::single(MetricId::Tardiness, Aggregation::Sum),
    }
}

fn seq_env(inst: &Instance, reward: RewardSpec) -> Env {
    let mut config = EnvConfig::new(BreakdownKind::OperationSequencing, ActionSpec::Direct, reward);
    config.obs = ObsSpec {
        raw: true,
        features: FeatureId::ALL
            .into_iter()
            .filter(|&f| f != FeatureId::AvgTransportUtilization)
            .collect(),
    };
    make_env(inst, config, 0).unwrap()
}

fn feature(r: &StepResult, env: &Env, id: FeatureId) -> Vec<f64> {
    let inst = env.instance();
    let (n, m) = (inst.n_jobs(), inst.n_machines());
    let mut at = 0;
    for &f in &env.config().obs.features {
        let w = f.width(n, m);
        if f == id {
            return r.obs.features.as_ref().unwrap()[at..at + w].to_vec();
        }
        at += w;
    }
    panic!("{id} not configured")
}

fn legal_index(r: &StepResult, a: &Action) -> EnvAction {
    EnvAction::Legal(r.legal_actions.iter().position(|x| x == a).unwrap())
}

/// Drive to the end choosing uniformly among legal actions; returns the
/// summed reward.
fn random_episode(env: &mut Env, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, "test");
    let mut r = env.reset().unwrap();
    let mut total = r.reward;
    while !r.done {
        let a = EnvAction::Legal(rng.below(r.legal_actions.len()));
        r = env.step(&a).unwrap();
        total += r.reward;
    }
    total
}

#[test]
fn job_shop_emits_only_sequencing_decisions() {
    let t = "Jm||C_max".parse().unwrap();
    let inst = generate_instance(&t, &Shape::new(4, 3, 1, 1, 9), 3).unwrap();
    let mut env = seq_env(&inst, makespan_reward());
    let mut r = env.reset().unwrap();
    let mut steps = 0;
    while !r.done {
        let dp = r.info.decision.clone().unwrap();
        assert!(matches!(dp.kind, DecisionKind::Sequencing { .. }), "{dp:?}");
        let Action::Sequence { job, .. } = r.legal_actions[0] else { panic!() };
        r = env.step(&EnvAction::Direct(job)).unwrap();
        steps += 1;
    }
    assert_eq!(steps, inst.jobs.iter().map(|j| j.operations.len()).sum::<usize>());
}

#[test]
fn flexible_shop_shares_a_virtual_buffer() {
    let mut inst = shop("FJc||C_max", &[&[(0, 2.0), (1, 1.0)], &[(1, 1.0), (0, 3.0)]], 3);
    inst.machines[1] = Machine::simple(0);
    inst.machines[2] = Machine::simple(1);
    let mut env = seq_env(&inst, makespan_reward());
    let r = env.reset().unwrap();
    let sim = env.state().unwrap();
    assert_eq!(sim.sequencing_candidates(0), vec![(0, 0)]);
    assert_eq!(sim.sequencing_candidates(1), vec![(0, 0)]);
    assert_eq!(r.info.decision.unwrap().kind, DecisionKind::Sequencing { machine: 0 });
    let r = env.step(&EnvAction::Direct(0)).unwrap();
    // taken by m0, so m1 has nothing left and m2 decides next
    assert!(env.state().unwrap().sequencing_candidates(1).is_empty());
    assert_eq!(r.info.decision.unwrap().kind, DecisionKind::Sequencing { machine: 2 });
    let mut r = env.step(&EnvAction::Direct(1)).unwrap();
    let mut kinds = BTreeSet::new();
    while !r.done {
        let dp = r.info.decision.clone().unwrap();
        assert!(matches!(dp.kind, DecisionKind::Sequencing { .. }));
        kinds.insert(dp.kind.resource());
        r = env.step(&EnvAction::Legal(0)).unwrap();
    }
    // j1's second operation goes to whichever wc0 machine frees first
    assert_eq!(kinds, BTreeSet::from([1, 2]));
    assert_eq!(r.reward, -4.0);
}

#[test]
fn breakdown_compatibility_is_checked() {
    let inst = shop("Jm||C_max", &[&[(0, 1.0)]], 1);
    for b in [
        BreakdownKind::TransportCentricRouting,
        BreakdownKind::HolisticRoutingSequencing,
        BreakdownKind::RoutingBeforeSequencing,
        BreakdownKind::InterlacedRoutingSequencing,
    ] {
        let config = EnvConfig::new(b, ActionSpec::Direct, makespan_reward());
        assert!(matches!(make_env(&inst, config, 0), Err(MdpError::Incompatible { .. })));
    }
    let config = EnvConfig::new(BreakdownKind::OperationSequencing, ActionSpec::SolverParams, makespan_reward());
    assert!(matches!(make_env(&inst, config, 0), Err(MdpError::ActionSpec(_))));
    let config = EnvConfig::new(
        BreakdownKind::OperationSequencing,
        ActionSpec::RuleSelect {
            sequencing: vec![],
            routing: vec![RoutingRule::Sq],
        },
        makespan_reward(),
    );
    assert!(matches!(make_env(&inst, config, 0), Err(MdpError::ActionSpec(_))));
    let mut config = EnvConfig::new(BreakdownKind::OperationSequencing, ActionSpec::Direct, makespan_reward());
    config.obs.features = vec![FeatureId::AvgTransportUtilization];
    assert!(matches!(make_env(&inst, config, 0), Err(MdpError::FeatureInapplicable { .. })));
}

#[test]
fn step_before_reset_and_after_done() {
    let inst = shop("1||C_max", &[&[(0, 1.0)]], 1);
    let mut env = seq_env(&inst, makespan_reward());
    assert_eq!(env.step(&EnvAction::Legal(0)), Err(MdpError::NotReset));
    env.reset().unwrap();
    assert!(env.step(&EnvAction::Legal(0)).unwrap().done);
    assert_eq!(env.step(&EnvAction::Legal(0)), Err(MdpError::Done));
}

#[test]
fn reset_is_deterministic() {
    let t = "FJc|r_j^s,p_ji^s|C_max".parse().unwrap();
    let inst = generate_instance(&t, &Shape::new(5, 3, 2, 1, 9), 4).unwrap();
    let mut config = EnvConfig::new(BreakdownKind::OperationSequencing, ActionSpec::Direct, makespan_reward());
    config.horizon = Some(200.0);
    config.obs.raw = true;
    let mut env = make_env(&inst, config, 9).unwrap();
    let a = env.reset().unwrap();
    env.step(&EnvAction::Legal(0)).unwrap();
    let b = env.reset().unwrap();
    assert_eq!(a, b);
}

#[test]
fn raw_observation_at_start_is_the_duration_matrix() {
    let inst = shop("Jm||C_max", &[&[(0, 3.0), (1, 2.0)], &[(1, 4.0), (0, 1.0)]], 2);
    let mut env = seq_env(&inst, makespan_reward());
    let r = env.reset().unwrap();
    let raw = r.obs.raw.as_ref().unwrap();
    assert_eq!(raw.remaining, vec![vec![3.0, 2.0], vec![4.0, 1.0]]);
    assert_eq!(raw.types, vec![vec![0, 1], vec![1, 0]]);
    assert!(raw.active.iter().flatten().all(|a| !a));
    assert_eq!(raw.t, 0.0);
    assert_eq!(feature(&r, &env, FeatureId::JobsInSystem), vec![2.0]);
}

#[test]
fn raw_observation_tracks_progress() {
    let mut inst = shop("Jm|r_j,vnops|C_max", &[&[(0, 10.0)], &[(1, 1.0)], &[(0, 1.0), (1, 1.0)]], 2);
    inst.jobs[1].release = 5.0;
    inst.jobs[2].release = 50.0;
    let mut env = seq_env(&inst, makespan_reward());
    let r = env.reset().unwrap();
    assert_eq!(feature(&r, &env, FeatureId::JobsInSystem), vec![1.0]);
    let r = env.step(&EnvAction::Direct(0)).unwrap();
    assert_eq!(r.info.time, 5.0);
    let raw = r.obs.raw.as_ref().unwrap();
    assert_eq!(raw.i, 1);
    assert_eq!(raw.remaining[0][0], 5.0);
    assert_eq!(raw.location[0][0], 0);
    assert!(raw.active[0][0]);
    // padding for the one-operation jobs
    assert_eq!(raw.types[0][1], NONE);
    assert_eq!(raw.remaining[0][1], 0.0);
    let r = env.step(&EnvAction::Direct(1)).unwrap();
    let raw = r.obs.raw.as_ref().unwrap();
    assert_eq!(raw.remaining[0][0], 0.0);
    assert_eq!(raw.remaining[1][0], 0.0);
    assert!(!raw.active[0][0]);
    assert_eq!(raw.location[0][0], NONE);
}

#[test]
fn remaining_ops_and_tardiness_estimate() {
    let mut inst = shop("Jm||C_max", &[&[(0, 10.0), (1, 5.0), (2, 1.0)]], 3);
    inst.jobs[0].due = Some(12.0);
    let mut env = seq_env(&inst, makespan_reward());
    env.reset().unwrap();
    let r = env.step(&EnvAction::Direct(0)).unwrap();
    assert_eq!(r.info.time, 10.0);
    assert_eq!(feature(&r, &env, FeatureId::RemainingJobOps), vec![2.0]);
    assert_eq!(feature(&r, &env, FeatureId::RemainingJobProcessingTime), vec![6.0]);
    assert_eq!(feature(&r, &env, FeatureId::EstimatedTotalTardiness), vec![4.0]);
    assert_eq!(feature(&r, &env, FeatureId::AvgMachineUtilization), vec![1.0 / 3.0]);

    let mut inst = shop("Jm||C_max", &[&[(0, 10.0), (1, 5.0)]], 2);
    inst.jobs[0].due = Some(12.0);
    let mut env = seq_env(&inst, makespan_reward());
    env.reset().unwrap();
    let r = env.step(&EnvAction::Direct(0)).unwrap();
    assert_eq!(feature(&r, &env, FeatureId::EstimatedTotalTardiness), vec![3.0]);
    let r = env.step(&EnvAction::Direct(0)).unwrap();
    // realized once finished
    assert_eq!(feature(&r, &env, FeatureId::EstimatedTotalTardiness), vec![3.0]);
}

#[test]
fn buffer_features() {
    let mut inst = shop("1|fmls|C_max", &[&[(0, 1.0)], &[(0, 3.0)], &[(0, 4.0)]], 1);
    inst.jobs[2].family = Some(7);
    let mut env = seq_env(&inst, makespan_reward());
    env.reset().unwrap();
    let r = env.step(&EnvAction::Direct(0)).unwrap();
    assert_eq!(feature(&r, &env, FeatureId::BufferRemainingTime), vec![7.0]);
    assert_eq!(feature(&r, &env, FeatureId::ResourceWorkload), vec![7.0]);
    assert_eq!(feature(&r, &env, FeatureId::RemainingVsBufferedRatio), vec![0.0]);
    assert_eq!(feature(&r, &env, FeatureId::ProductTypesInBuffer), vec![2.0]);
    assert_eq!(feature(&r, &env, FeatureId::AvgBufferLength), vec![2.0]);
    env.step(&EnvAction::Direct(1)).unwrap();
    assert!(env.step(&EnvAction::Direct(2)).unwrap().done);
}

#[test]
fn workload_counts_the_running_operation() {
    let inst = shop("Pm||C_max", &[&[(0, 4.0)], &[(0, 6.0)], &[(0, 1.0)]], 2);
    let mut inst = inst;
    inst.machines[1] = Machine::simple(0);
    let mut env = seq_env(&inst, makespan_reward());
    env.reset().unwrap();
    // m0 starts j0 (4), m1 starts j1 (6), then m0 frees at 4
    env.step(&EnvAction::Direct(0)).unwrap();
    let r = env.step(&EnvAction::Direct(1)).unwrap();
    assert_eq!(r.info.time, 4.0);
    assert_eq!(feature(&r, &env, FeatureId::ResourceWorkload)[1], 2.0);
    assert_eq!(feature(&r, &env, FeatureId::RemainingVsBufferedRatio)[1], 1.0);
}

#[test]
fn transport_utilization_feature() {
    let mut inst = shop("Fm|tr(1)|C_max", &[&[(0, 3.0), (1, 3.0)]], 2);
    inst.transport.mode = TransportMode::Fleet(1);
    inst.transport.travel = (0..3)
        .map(|a| (0..3).map(|b| if a == b { 0.0 } else { 2.0 }).collect())
        .collect();
    let mut config = EnvConfig::new(BreakdownKind::HolisticRoutingSequencing, ActionSpec::Direct, makespan_reward());
    config.obs.features = vec![FeatureId::AvgTransportUtilization];
    let mut env = make_env(&inst, config, 0).unwrap();
    let mut r = env.reset().unwrap();
    assert_eq!(r.obs.features, Some(vec![0.0]));
    while !r.done {
        r = env.step(&EnvAction::Legal(0)).unwrap();
        let u = r.obs.features.as_ref().unwrap()[0];
        assert!((0.0..=1.0).contains(&u));
    }
    assert_eq!(env.objective().unwrap(), 10.0);
}

#[test]
fn spt_rule_action_picks_shortest() {
    let inst = shop("1||C_max", &[&[(0, 5.0)], &[(0, 3.0)], &[(0, 7.0)]], 1);
    let config = EnvConfig::new(
        BreakdownKind::OperationSequencing,
        ActionSpec::RuleSelect {
            sequencing: vec![SequencingRule::Lpt, SequencingRule::Spt],
            routing: vec![],
        },
        makespan_reward(),
    );
    let mut env = make_env(&inst, config, 0).unwrap();
    env.reset().unwrap();
    assert_eq!(env.rule_count(), 2);
    let r = env.step(&EnvAction::Rule(1)).unwrap();
    assert_eq!(r.info.applied, Some(Action::Sequence { job: 1, op: 0 }));
    let r = env.step(&EnvAction::Rule(0)).unwrap();
    assert_eq!(r.info.applied, Some(Action::Sequence { job: 2, op: 0 }));
    assert!(matches!(env.step(&EnvAction::Rule(2)), Err(MdpError::Illegal { .. })));
}

#[test]
fn sq_rule_routes_to_the_shorter_queue() {
    let mut inst = shop("Pm||C_max", &[&[(0, 10.0)], &[(0, 4.0)], &[(0, 1.0)]], 2);
    inst.machines[1] = Machine::simple(0);
    let config = EnvConfig::new(
        BreakdownKind::InterlacedRoutingSequencing,
        ActionSpec::RuleSelect {
            sequencing: vec![SequencingRule::Spt],
            routing: vec![RoutingRule::Lqe, RoutingRule::Sq],
        },
        makespan_reward(),
    );
    let mut env = make_env(&inst, config, 0).unwrap();
    let r = env.reset().unwrap();
    let r = env.step(&legal_index(&r, &Action::Route { op: 0, machine: 0 })).unwrap();
    let r = env.step(&legal_index(&r, &Action::Route { op: 0, machine: 1 })).unwrap();
    assert_eq!(
        r.info.decision.unwrap().kind,
        DecisionKind::Routing {
            job: 2,
            candidates: vec![0, 1]
        }
    );
    let sim = env.state().unwrap();
    assert_eq!((sim.queued_work(0), sim.queued_work(1)), (10.0, 4.0));
    let r = env.step(&EnvAction::Rule(1)).unwrap();
    assert_eq!(r.info.applied, Some(Action::Route { op: 0, machine: 1 }));
}

/// Makespan of the semi-active schedule fixed by per-machine job orders on a
/// two-machine job shop, or `None` when the orders deadlock.
fn semi_active(jobs: &[Vec<(usize, f64)>], orders: &[Vec<usize>]) -> Option<Vec<Vec<f64>>> {
    let mut start = vec![vec![f64::NAN; 2]; jobs.len()];
    let mut next_op = vec![0; jobs.len()];
    let mut pos = vec![0; orders.len()];
    let mut free = vec![0.0; orders.len()];
    let mut job_free = vec![0.0; jobs.len()];
    let total: usize = jobs.iter().map(|j| j.len()).sum();
    for _ in 0..total {
        let mut progressed = false;
        for m in 0..orders.len() {
            let Some(&j) = orders[m].get(pos[m]) else { continue };
            let k = next_op[j];
            if k < jobs[j].len() && jobs[j][k].0 == m {
                let s: f64 = f64::max(free[m], job_free[j]);
                start[j][k] = s;
                free[m] = s + jobs[j][k].1;
                job_free[j] = free[m];
                next_op[j] += 1;
                pos[m] += 1;
                progressed = true;
                break;
            }
        }
        if !progressed {
            return None;
        }
    }
    Some(start)
}

fn all_orders(jobs: &[Vec<(usize, f64)>]) -> Vec<Vec<Vec<f64>>> {
    let perms = [vec![0, 1], vec![1, 0]];
    let mut out = Vec::new();
    for a in &perms {
        for b in &perms {
            if let Some(s) = semi_active(jobs, &[a.clone(), b.clone()]) {
                out.push(s);
            }
        }
    }
    out
}

fn makespan_of(jobs: &[Vec<(usize, f64)>], start: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (j, ops) in jobs.iter().enumerate() {
        for (k, &(_, p)) in ops.iter().enumerate() {
            best = best.max(start[j][k] + p);
        }
    }
    best
}

/// Every terminal episode reachable from the env's current state, as the
/// per-operation start matrix and the final reward.
fn enumerate(env: &Env, r: &StepResult, out: &mut Vec<(Vec<Vec<f64>>, f64)>) {
    if r.done {
        let rec = env.state().unwrap().record();
        let starts = rec
            .jobs
            .iter()
            .map(|j| j.ops.iter().map(|o| o.start.unwrap()).collect())
            .collect();
        out.push((starts, r.reward));
        return;
    }
    for i in 0..r.legal_actions.len() {
        let mut next = env.clone();
        let nr = next.step(&EnvAction::Legal(i)).unwrap();
        enumerate(&next, &nr, out);
    }
}

#[test]
fn terminal_reward_is_the_negative_optimum() {
    let jobs = vec![vec![(0, 30.0), (1, 25.0)], vec![(1, 20.0), (0, 25.0)]];
    let best = all_orders(&jobs)
        .iter()
        .map(|s| makespan_of(&jobs, s))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best, 55.0);
    let inst = shop("Jm||C_max", &[&jobs[0], &jobs[1]], 2);
    let mut env = seq_env(&inst, makespan_reward());
    let r = env.reset().unwrap();
    let r1 = env.clone().step(&EnvAction::Legal(0)).unwrap();
    assert!(!r1.done);
    assert_eq!(r1.reward, 0.0);
    let mut ends = Vec::new();
    enumerate(&env, &r, &mut ends);
    let top = ends.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(top, -55.0);
}

/// A schedule is active when no operation fits into an earlier idle gap on
/// its machine without delaying anything else.
fn is_active(jobs: &[Vec<(usize, f64)>], start: &[Vec<f64>]) -> bool {
    for (j, ops) in jobs.iter().enumerate() {
        for (k, &(m, p)) in ops.iter().enumerate() {
            let ready = if k == 0 { 0.0 } else { start[j][k - 1] + ops[k - 1].1 };
            let mut busy: Vec<(f64, f64)> = Vec::new();
            for (j2, ops2) in jobs.iter().enumerate() {
                for (k2, &(m2, p2)) in ops2.iter().enumerate() {
                    if m2 == m && (j2, k2) != (j, k) {
                        busy.push((start[j2][k2], start[j2][k2] + p2));
                    }
                }
            }
            busy.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut gap_start = 0.0f64;
            for &(s, e) in busy.iter().chain([(f64::INFINITY, f64::INFINITY)].iter()) {
                let at = gap_start.max(ready);
                if at < start[j][k] && at + p <= s && s <= start[j][k] {
                    return false;
                }
                gap_start = gap_start.max(e);
            }
        }
    }
    true
}

#[test]
fn sequencing_breakdown_reaches_every_active_schedule() {
    let mut count = 0;
    for code in 0..81u32 {
        let d = |i: u32| (1 + (code / 3u32.pow(i)) % 3) as f64;
        for routes in [[(0, 1), (1, 0)], [(0, 1), (0, 1)]] {
            let jobs = vec![
                vec![(routes[0].0, d(0)), (routes[0].1, d(1))],
                vec![(routes[1].0, d(2)), (routes[1].1, d(3))],
            ];
            let inst = shop("Jm||C_max", &[&jobs[0], &jobs[1]], 2);
            let mut config = EnvConfig::new(BreakdownKind::OperationSequencing, ActionSpec::Direct, makespan_reward());
            config.allow_wait = true;
            let mut env = make_env(&inst, config, 0).unwrap();
            let r = env.reset().unwrap();
            let mut reached = Vec::new();
            enumerate(&env, &r, &mut reached);
            assert!(reached.iter().all(|(s, _)| s.iter().flatten().all(|x| x.is_finite())));
            for s in all_orders(&jobs).into_iter().filter(|s| is_active(&jobs, s)) {
                assert!(
                    reached.iter().any(|(r, _)| *r == s),
                    "{jobs:?}: active schedule {s:?} unreachable"
                );
                count += 1;
            }
        }
    }
    assert!(count >= 162);
}

#[test]
fn dense_delta_charges_tardiness_when_it_happens() {
    let mut inst = shop("1||sum_T_j", &[&[(0, 3.0)], &[(0, 1.0)]], 1);
    inst.jobs[0].due = Some(1.0);
    inst.jobs[1].due = Some(100.0);
    let mut env = seq_env(&inst, tardiness(Shaping::DenseDelta));
    env.reset().unwrap();
    let r = env.step(&EnvAction::Direct(0)).unwrap();
    assert_eq!(r.info.time, 3.0);
    assert_eq!(r.reward, -2.0);
    let r = env.step(&EnvAction::Direct(1)).unwrap();
    assert!(r.done);
    assert_eq!(r.reward, 0.0);
    assert_eq!(env.objective().unwrap(), 2.0);
}

#[test]
fn queue_proxy_counts_waiting_operations() {
    let one: &[(usize, f64)] = &[(0, 1.0)];
    let inst = shop("1||C_max", &[one; 5], 1);
    let reward = RewardSpec {
        shaping: Shaping::QueueLengthProxy,
        objective: ObjectiveSpec::makespan(),
    };
    let mut env = seq_env(&inst, reward);
    env.reset().unwrap();
    let r = env.step(&EnvAction::Direct(0)).unwrap();
    assert_eq!(r.reward, -4.0);
}

#[test]
fn dense_rewards_telescope() {
    for (tri, shape) in [
        ("Jm||sum_T_j", Shape::new(4, 3, 1, 1, 9)),
        ("FJc|r_j^s|sum_U_j", Shape::new(5, 2, 2, 1, 9)),
    ] {
        let t: crate::notation::ProblemTriplet = tri.parse().unwrap();
        let objective = t.gamma.clone();
        for seed in 0..15 {
            let inst = generate_instance(&t, &shape, seed).unwrap();
            let reward = RewardSpec {
                shaping: Shaping::DenseDelta,
                objective: objective.clone(),
            };
            let mut config = EnvConfig::new(BreakdownKind::OperationSequencing, ActionSpec::Direct, reward);
            config.horizon = Some(500.0);
            let mut env = make_env(&inst, config, seed).unwrap();
            let total = random_episode(&mut env, seed);
            assert_eq!(total, -env.objective().unwrap(), "{tri} seed {seed}");
        }
    }
}

#[test]
fn rule_select_matches_the_rule_agent() {
    let t = "FJc|r_j^s,p_ji^s|C_max".parse().unwrap();
    let inst = generate_instance(&t, &Shape::new(6, 3, 2, 1, 9), 5).unwrap();
    for (i, r) in SequencingRule::ALL.into_iter().enumerate() {
        let mut config = EnvConfig::new(BreakdownKind::OperationSequencing, ActionSpec::all_rules(), makespan_reward());
        config.horizon = Some(300.0);
        let mut env = make_env(&inst, config.clone(), 3).unwrap();
        let mut res = env.reset().unwrap();
        while !res.done {
            res = env.step(&EnvAction::Rule(i)).unwrap();
        }
        let mut sim_config = config.sim_config();
        sim_config.sequencing = SequencingControl::Rule(r);
        let mut sim = SimState::init(&inst, 3, Some(300.0), sim_config).unwrap();
        assert!(matches!(sim.advance().unwrap(), Step::Terminal(_)));
        assert_eq!(env.state().unwrap().record(), sim.record(), "{r}");
    }
}

fn fleet_instance(seed: u64) -> Instance {
    let t = "Fm|tr(2)|C_max".parse().unwrap();
    generate_instance(&t, &Shape::new(4, 3, 1, 1, 6), seed).unwrap()
}

#[test]
fn holistic_covers_transport_centric() {
    for seed in 0..8 {
        let inst = fleet_instance(seed);
        let tc = EnvConfig::new(BreakdownKind::TransportCentricRouting, ActionSpec::Direct, makespan_reward());
        let mut env = make_env(&inst, tc, seed).unwrap();
        let mut rng = RngStream::new(seed, "tc");
        let mut r = env.reset().unwrap();
        let mut choices = Vec::new();
        while !r.done {
            let a = r.legal_actions[rng.below(r.legal_actions.len())].clone();
            choices.push(a.clone());
            r = env.step(&legal_index(&r, &a)).unwrap();
        }
        let target = env.state().unwrap().record();

        let hol = EnvConfig::new(BreakdownKind::HolisticRoutingSequencing, ActionSpec::Direct, makespan_reward());
        let mut env2 = make_env(&inst, hol, seed).unwrap();
        let mut r = env2.reset().unwrap();
        let mut replay = choices.into_iter();
        while !r.done {
            let dp = r.info.decision.clone().unwrap();
            let a = match dp.kind {
                DecisionKind::Sequencing { machine } => {
                    let sim = env2.state().unwrap();
                    let cands: Vec<(usize, usize)> = r
                        .legal_actions
                        .iter()
                        .map(|a| match a {
                            Action::Sequence { job, op } => (*job, *op),
                            _ => unreachable!(),
                        })
                        .collect();
                    r.legal_actions[SequencingRule::Fifo.choose(sim, Some(machine), &cands)].clone()
                }
                _ => replay.next().unwrap(),
            };
            r = env2.step(&legal_index(&r, &a)).unwrap();
        }
        assert!(replay.next().is_none());
        assert_eq!(env2.state().unwrap().record(), target, "seed {seed}");
    }
}

#[test]
fn routing_before_sequencing_fixes_paths_op_by_op() {
    let t = "FJc||C_max".parse().unwrap();
    let inst = generate_instance(&t, &Shape::new(3, 3, 2, 1, 9), 1).unwrap();
    let config = EnvConfig::new(BreakdownKind::RoutingBeforeSequencing, ActionSpec::Direct, makespan_reward());
    let mut env = make_env(&inst, config, 0).unwrap();
    let mut r = env.reset().unwrap();
    let mut routed: Vec<Vec<usize>> = vec![Vec::new(); inst.n_jobs()];
    while !r.done {
        let dp = r.info.decision.clone().unwrap();
        if let DecisionKind::Sequencing { .. } = dp.kind {
            let Action::Sequence { job, op } = r.legal_actions[0] else { panic!() };
            assert_eq!(routed[job].len(), inst.jobs[job].operations.len(), "j{job} o{op} sequenced before routing");
        }
        if let Action::Route { op, .. } = r.legal_actions[0] {
            let DecisionKind::Routing { job, .. } = dp.kind else { panic!() };
            assert_eq!(op, routed[job].len());
            routed[job].push(op);
        }
        r = env.step(&EnvAction::Legal(0)).unwrap();
    }
    assert!(schedule_violations(&inst, &env.state().unwrap().record()).is_empty());
}

#[test]
fn rescheduling_accepts_solver_parameters() {
    let t = "Jm|brkdwn^s,r_j^s|C_max".parse().unwrap();
    let inst = generate_instance(&t, &Shape::new(5, 3, 1, 1, 9), 2).unwrap();
    let mut config = EnvConfig::new(BreakdownKind::rescheduling(), ActionSpec::SolverParams, makespan_reward());
    config.horizon = Some(400.0);
    let mut env = make_env(&inst, config, 7).unwrap();
    let mut r = env.reset().unwrap();
    let mut decisions = 0;
    while !r.done {
        assert!(matches!(r.info.decision.as_ref().unwrap().kind, DecisionKind::Reschedule { .. }));
        r = env.step(&EnvAction::Params(vec![(decisions % 5) as f64, 0.5])).unwrap();
        decisions += 1;
    }
    assert!(decisions >= 1);
    assert!(schedule_violations(&inst, &env.state().unwrap().record()).is_empty());
}

#[test]
fn illegal_actions_follow_the_policy() {
    let inst = shop("1||C_max", &[&[(0, 1.0)], &[(0, 2.0)]], 1);
    let mut env = seq_env(&inst, makespan_reward());
    env.reset().unwrap();
    let hash = env.state().unwrap().trace().hash();
    assert!(matches!(env.step(&EnvAction::Direct(9)), Err(MdpError::Illegal { .. })));
    assert!(matches!(env.step(&EnvAction::Legal(2)), Err(MdpError::Illegal { .. })));
    assert!(matches!(env.step(&EnvAction::Rule(0)), Err(MdpError::Illegal { .. })));
    assert_eq!(env.state().unwrap().trace().hash(), hash);

    let mut config = env.config().clone();
    config.illegal = IllegalPolicy::MaskAndPenalize { penalty: -10.0 };
    let mut env = make_env(&inst, config, 0).unwrap();
    let first = env.reset().unwrap();
    let r = env.step(&EnvAction::Direct(9)).unwrap();
    assert_eq!(r.reward, -10.0);
    assert!(r.info.illegal);
    assert!(!r.done);
    assert_eq!(r.legal_actions, first.legal_actions);
    assert_eq!(env.state().unwrap().trace().hash(), hash);
}

#[test]
fn wait_action_is_offered_when_allowed() {
    let mut inst = shop("1|r_j|C_max", &[&[(0, 5.0)], &[(0, 1.0)]], 1);
    inst.jobs[1].release = 1.0;
    let mut config = EnvConfig::new(BreakdownKind::OperationSequencing, ActionSpec::Direct, makespan_reward());
    config.allow_wait = true;
    let mut env = make_env(&inst, config, 0).unwrap();
    let r = env.reset().unwrap();
    assert!(r.legal_actions.contains(&Action::Wait));
    let r = env.step(&EnvAction::Wait).unwrap();
    assert_eq!(r.info.time, 1.0);
    env.step(&EnvAction::Direct(1)).unwrap();
    let r = env.step(&EnvAction::Direct(0)).unwrap();
    assert!(r.done);
    assert_eq!(env.objective().unwrap(), 7.0);
}

fn run_lines(env: &mut Env, lines: &[String]) -> Vec<Response> {
    let input = lines.join("\n");
    let mut out = Vec::new();
    serve(env, input.as_bytes(), &mut out).unwrap();
    String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn served_episode_matches_native() {
    let t = "Jm|p_ji^s|C_max".parse().unwrap();
    let inst = generate_instance(&t, &Shape::new(3, 3, 1, 1, 9), 0).unwrap();
    let mut config = EnvConfig::new(BreakdownKind::OperationSequencing, ActionSpec::Direct, makespan_reward());
    config.obs.raw = true;
    let mut native = make_env(&inst, config, 4).unwrap();
    let mut served = native.clone();
    let mut r = native.reset().unwrap();
    let mut lines = vec![
        r#"{"cmd":"spec"}"#.to_string(),
        format!(r#"{{"cmd":"reset","seed":4,"protocol_version":{PROTOCOL_VERSION}}}"#),
    ];
    while !r.done {
        lines.push(r#"{"cmd":"step","action":{"type":"legal","value":0}}"#.into());
        r = native.step(&EnvAction::Legal(0)).unwrap();
    }
    lines.push(r#"{"cmd":"close"}"#.into());
    lines.push(r#"{"cmd":"spec"}"#.into());
    let resp = run_lines(&mut served, &lines);
    assert_eq!(resp.len(), lines.len() - 1);
    let spec = resp[0].spec.as_ref().unwrap();
    assert_eq!((spec.n_jobs, spec.n_machines, spec.max_ops), (3, 3, 3));
    let last = resp[resp.len() - 2].step.as_ref().unwrap();
    assert!(last.done);
    assert_eq!(last.info.trace_hash, r.info.trace_hash);
    assert_eq!(last, &r);
    assert!(resp.last().unwrap().closed);
}

#[test]
fn serve_reports_errors() {
    let inst = shop("1||C_max", &[&[(0, 1.0)]], 1);
    let mut env = seq_env(&inst, makespan_reward());
    let resp = run_lines(
        &mut env,
        &[
            r#"{"cmd":"reset","protocol_version":99}"#.into(),
            r#"{"cmd":"step","action":{"type":"legal","value":0}}"#.into(),
            "not json".into(),
            r#"{"cmd":"reset"}"#.into(),
            r#"{"cmd":"step","action":{"type":"direct","value":5}}"#.into(),
        ],
    );
    let kinds: Vec<Option<&str>> = resp.iter().map(|r| r.error.as_ref().map(|e| e.kind.as_str())).collect();
    assert_eq!(
        kinds,
        vec![
            Some("protocol_mismatch"),
            Some("not_reset"),
            Some("bad_request"),
            None,
            Some("illegal_action")
        ]
    );
}

#[test]
fn request_round_trip() {
    let req = Request {
        protocol_version: Some(1),
        command: serve::Command::Step {
            action: EnvAction::Params(vec![1.0, 0.5]),
        },
    };
    let text = serde_json::to_string(&req).unwrap();
    assert_eq!(
        text,
        r#"{"protocol_version":1,"cmd":"step","action":{"type":"params","value":[1.0,0.5]}}"#
    );
    assert_eq!(serde_json::from_str::<Request>(&text).unwrap(), req);
}
