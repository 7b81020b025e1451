use super::derive::{derive_alpha, derive_beta};
use super::{BatchSpec, Instance, ReleaseProcess, SetupTimes, Speed, TransportMode};
use crate::notation::{self, subsumes, ConstraintTag, SetupKind, Violation};

fn acyclic(n: usize, preds: impl Fn(usize) -> Vec<usize>) -> bool {
    // Kahn's algorithm
    let mut indeg = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for v in 0..n {
        for p in preds(v) {
            if p < n {
                indeg[v] += 1;
                succ[p].push(v);
            }
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &s in &succ[v] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                stack.push(s);
            }
        }
    }
    seen == n
}

/// Structural checks over an instance. Returns an empty list when the
/// instance is consistent with itself and its declared triplet.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = notation::validate(&inst.triplet);
    let n = inst.jobs.len();
    let m = inst.machines.len();
    let mut push = |code: &str, msg: String| out.push(Violation::new(code, msg));

    if n == 0 {
        push("empty-instance", "instance has no jobs".into());
    }
    if m == 0 {
        push("empty-instance", "instance has no machines".into());
    }

    for (j, job) in inst.jobs.iter().enumerate() {
        if job.operations.is_empty() {
            push("empty-job", format!("job {j} has no operations"));
        }
        if !(job.release >= 0.0 && job.release.is_finite()) {
            push("release", format!("job {j} has release {}", job.release));
        }
        if let Some(d) = job.due {
            if !d.is_finite() {
                push("due-date", format!("job {j} has a non-finite due date"));
            }
        }
        let k = job.operations.len();
        for (i, op) in job.operations.iter().enumerate() {
            if !(op.duration > 0.0 && op.duration.is_finite()) {
                push(
                    "nonpositive-duration",
                    format!("operation {i} of job {j} has duration {}", op.duration),
                );
            }
            if op.predecessors.iter().any(|&p| p >= k || p == i) {
                push(
                    "bad-predecessor",
                    format!("operation {i} of job {j} names an invalid predecessor"),
                );
            }
            if m > 0 && inst.eligible_machines(j, i).is_empty() {
                push(
                    "uncoverable-operation",
                    format!(
                        "operation {i} of job {j} has type {} that no machine can process",
                        op.op_type
                    ),
                );
            }
        }
        if !acyclic(k, |v| job.operations[v].predecessors.clone()) {
            push("precedence-cycle", format!("job {j} has cyclic precedence"));
        }
    }

    for (i, mc) in inst.machines.iter().enumerate() {
        if mc.capabilities.is_empty() {
            push("empty-capabilities", format!("machine {i} has no capabilities"));
        }
        match &mc.speed {
            Speed::Uniform(v) if !(*v > 0.0 && v.is_finite()) => {
                push("speed", format!("machine {i} has speed {v}"))
            }
            Speed::PerJob(vs) => {
                if vs.len() != n {
                    push(
                        "speed",
                        format!("machine {i} lists {} job speeds for {n} jobs", vs.len()),
                    );
                }
                if vs.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    push("speed", format!("machine {i} has a nonpositive job speed"));
                }
            }
            _ => {}
        }
        if mc.input_buffer == Some(0) {
            push(
                "buffer-capacity",
                format!("machine {i} input buffer capacity must be at least 1"),
            );
        }
        match mc.batch {
            Some(BatchSpec::Fixed { size, duration }) => {
                if size == 0 || !(duration > 0.0) {
                    push("batch-spec", format!("machine {i} has an empty or zero-length batch"));
                }
            }
            Some(BatchSpec::Dynamic { capacity: 0 }) => {
                push("batch-spec", format!("machine {i} has batch capacity 0"))
            }
            _ => {}
        }
        if !(mc.available_from >= 0.0 && mc.available_from.is_finite()) {
            push("availability", format!("machine {i} has invalid available_from"));
        }
    }

    // transport
    let tr = &inst.transport;
    if tr.mode != TransportMode::None {
        let size = m + 1;
        if tr.travel.len() != size || tr.travel.iter().any(|r| r.len() != size) {
            push(
                "travel-matrix-shape",
                format!("travel matrix must be {size}x{size} (machines plus depot)"),
            );
        } else {
            for (a, row) in tr.travel.iter().enumerate() {
                for (b, v) in row.iter().enumerate() {
                    if !(*v >= 0.0 && v.is_finite()) {
                        push("travel-time", format!("travel[{a}][{b}] = {v}"));
                    }
                    if a == b && *v != 0.0 {
                        push("travel-time", format!("travel[{a}][{a}] must be 0"));
                    }
                }
            }
        }
    }
    if let TransportMode::Fleet(k) = tr.mode {
        if k == 0 {
            push("transport-fleet-size", "fleet mode requires at least one vehicle".into());
        }
        if !tr.home.is_empty() && (tr.home.len() != k as usize || tr.home.iter().any(|h| *h > m)) {
            push(
                "fleet-home",
                format!("home positions must list {k} locations in 0..={m}"),
            );
        }
    }

    // setups
    let fam_count = inst.jobs.iter().filter_map(|j| j.family).max().map(|f| f + 1);
    let square = |mat: &Vec<Vec<f64>>, k: usize| mat.len() == k && mat.iter().all(|r| r.len() == k);
    let nonneg = |mat: &Vec<Vec<f64>>| mat.iter().flatten().all(|v| *v >= 0.0 && v.is_finite());
    match &inst.setups {
        SetupTimes::None => {}
        SetupTimes::Family(mat) => {
            if inst.jobs.iter().any(|j| j.family.is_none()) {
                push("family-missing", "family setups need a family on every job".into());
            }
            if !square(mat, mat.len()) || fam_count.is_some_and(|f| mat.len() < f) {
                push("setup-tensor-shape", "family setup matrix does not cover all families".into());
            }
            if !nonneg(mat) {
                push("setup-time", "setup times must be nonnegative".into());
            }
        }
        SetupTimes::Job(mat) => {
            if !square(mat, n) {
                push("setup-tensor-shape", format!("job setup matrix must be {n}x{n}"));
            }
            if !nonneg(mat) {
                push("setup-time", "setup times must be nonnegative".into());
            }
        }
        SetupTimes::JobMachine(t) => {
            if t.len() != m || t.iter().any(|s| !square(s, n)) {
                push(
                    "setup-tensor-shape",
                    format!("machine setup tensor must hold {m} slices of {n}x{n}"),
                );
            }
            if t.iter().any(|s| !nonneg(s)) {
                push("setup-time", "setup times must be nonnegative".into());
            }
        }
    }

    // stochastic parameters
    let st = &inst.stochastic;
    let mut dists = Vec::new();
    match &st.release {
        Some(ReleaseProcess::Interarrival(d)) => dists.push(("release", d)),
        Some(ReleaseProcess::PerJob(ds)) => {
            if ds.len() != n {
                push("distribution", format!("{} release distributions for {n} jobs", ds.len()));
            }
            dists.extend(ds.iter().map(|d| ("release", d)));
        }
        None => {}
    }
    if let Some(d) = &st.duration_factor {
        dists.push(("duration_factor", d));
    }
    if let Some(d) = &st.demand {
        dists.push(("demand", d));
    }
    for b in &st.breakdowns {
        if b.machine >= m {
            push("breakdown-machine", format!("breakdown on unknown machine {}", b.machine));
        }
        dists.push(("breakdown uptime", &b.uptime));
        dists.push(("breakdown repair", &b.repair));
    }
    for (what, d) in dists {
        if let Err(e) = d.check() {
            push("distribution", format!("{what}: {e}"));
        }
    }
    let mut windows: Vec<(usize, f64, f64)> = Vec::new();
    for w in &inst.maintenance {
        if w.machine >= m || !(w.start >= 0.0) || !(w.duration > 0.0) {
            push("maintenance", format!("invalid maintenance window {w:?}"));
        } else {
            windows.push((w.machine, w.start, w.start + w.duration));
        }
    }
    windows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if windows.windows(2).any(|p| p[0].0 == p[1].0 && p[1].1 < p[0].2) {
        push("maintenance", "maintenance windows overlap on one machine".into());
    }
    if inst.demand.iter().any(|d| !(*d >= 0.0)) {
        push("demand", "demand times must be nonnegative".into());
    }

    // tag/field correspondence
    let evidenced = derive_beta(inst);
    let declared = &inst.triplet.beta;
    for tag in &evidenced {
        let covered = declared.contains(tag)
            || match tag {
                // generic release/breakdown/demand tags also admit deterministic data
                ConstraintTag::Rj => declared.contains(&ConstraintTag::RjS),
                ConstraintTag::Vnops => declared.contains(&ConstraintTag::Recrc),
                ConstraintTag::MiO => declared.contains(&ConstraintTag::Mi),
                _ => false,
            }
            // deterministic dates under a demand-driven system
            || (*tag == ConstraintTag::Rj
                && (declared.contains(&ConstraintTag::DmdJ) || declared.contains(&ConstraintTag::DmdJS)));
        if !covered {
            push(
                "tag-field-mismatch",
                format!("instance data uses {} but the triplet does not declare it", tag.token()),
            );
        }
    }
    for tag in declared {
        let required = matches!(
            tag,
            ConstraintTag::RjS
                | ConstraintTag::PjiS
                | ConstraintTag::BrkdwnS
                | ConstraintTag::DmdJS
                | ConstraintTag::TrInf
                | ConstraintTag::TrN(_)
        );
        if required && !evidenced.contains(tag) {
            push(
                "tag-field-mismatch",
                format!("triplet declares {} but the instance has no matching data", tag.token()),
            );
        }
    }

    if inst.triplet.gamma.terms().iter().any(|t| t.metric.needs_due_dates())
        && inst.jobs.iter().any(|j| j.due.is_none())
    {
        push("due-date-missing", "the objective needs a due date on every job".into());
    }

    if n > 0 && m > 0 {
        let derived = derive_alpha(inst);
        // a single machine running single-operation jobs fits every class
        if derived.kind != SetupKind::Single && !subsumes(inst.triplet.alpha, derived) {
            push(
                "alpha-mismatch",
                format!(
                    "instance structure is {}, which {} does not cover",
                    derived.kind.token(),
                    inst.triplet.alpha.kind.token()
                ),
            );
        }
        if let Some(c) = inst.triplet.alpha.count {
            if inst.triplet.alpha.kind.is_flexible() || inst.triplet.alpha.kind.is_shop() {
                let wcs = inst
                    .machines
                    .iter()
                    .map(|mc| mc.work_center)
                    .collect::<std::collections::BTreeSet<_>>()
                    .len();
                let expected = if inst.triplet.alpha.kind.is_flexible() { wcs } else { m };
                if expected != c as usize {
                    push(
                        "setup-count",
                        format!("alpha declares {c} but the instance has {expected}"),
                    );
                }
            } else if c as usize != m {
                push("setup-count", format!("alpha declares {c} machines, instance has {m}"));
            }
        }
    }

    out.sort_by(|a, b| a.code.cmp(&b.code).then(a.message.cmp(&b.message)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{load_orlib, BreakdownProcess, Machine};
    use crate::notation::parse_triplet;
    use crate::rng::Distribution;

    fn codes(inst: &Instance) -> Vec<String> {
        validate_instance(inst).into_iter().map(|v| v.code).collect()
    }

    #[test]
    fn ft06_is_clean() {
        let inst = load_orlib(crate::instance::FT06).unwrap();
        assert!(codes(&inst).is_empty(), "{:?}", validate_instance(&inst));
    }

    #[test]
    fn uncoverable_operation() {
        let mut inst = load_orlib("2 2\n0 3 1 2\n1 2 0 4").unwrap();
        inst.jobs[0].operations[1].op_type = 5;
        assert!(codes(&inst).contains(&"uncoverable-operation".to_string()));
    }

    #[test]
    fn setup_tensor_missing_a_slice() {
        let mut inst = load_orlib("2 2\n0 3 1 2\n1 2 0 4").unwrap();
        inst.triplet = parse_triplet("Jm|S_jki|C_max").unwrap();
        inst.setups = SetupTimes::JobMachine(vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]]]);
        assert_eq!(codes(&inst), vec!["setup-tensor-shape"]);
    }

    #[test]
    fn cycles_and_bad_predecessors() {
        let mut inst = load_orlib("1 2\n0 3 1 2").unwrap();
        inst.jobs[0].operations[0].predecessors = vec![1];
        assert_eq!(codes(&inst), vec!["alpha-mismatch", "precedence-cycle"]);
        inst.jobs[0].operations[0].predecessors = vec![7];
        assert!(codes(&inst).contains(&"bad-predecessor".to_string()));
    }

    #[test]
    fn tag_field_correspondence() {
        let mut inst = load_orlib("2 2\n0 3 1 2\n1 2 0 4").unwrap();
        inst.stochastic.breakdowns.push(BreakdownProcess {
            machine: 0,
            uptime: Distribution::Exponential { rate: 0.1 },
            repair: Distribution::Constant { value: 2.0 },
        });
        assert_eq!(codes(&inst), vec!["tag-field-mismatch"]);
        inst.triplet = parse_triplet("Jm|brkdwn^s|C_max").unwrap();
        assert!(codes(&inst).is_empty());
        inst.triplet = parse_triplet("Jm|brkdwn^s,tr(2)|C_max").unwrap();
        assert_eq!(codes(&inst), vec!["tag-field-mismatch"]);
    }

    #[test]
    fn structure_must_fit_alpha() {
        let mut inst = load_orlib("2 2\n0 3 1 2\n1 2 0 4").unwrap();
        inst.triplet = parse_triplet("Fm||C_max").unwrap();
        assert_eq!(codes(&inst), vec!["alpha-mismatch"]);
        inst.triplet = parse_triplet("FJc||C_max").unwrap();
        assert!(codes(&inst).is_empty());
        inst.machines.push(Machine::simple(1));
        inst.triplet = parse_triplet("Jm||C_max").unwrap();
        assert_eq!(codes(&inst), vec!["alpha-mismatch"]);
    }

    #[test]
    fn transport_shape() {
        let mut inst = load_orlib("1 1\n0 3").unwrap();
        inst.triplet = parse_triplet("Jm|tr(1)|C_max").unwrap();
        inst.transport.mode = TransportMode::Fleet(1);
        inst.transport.travel = vec![vec![0.0, 1.0]];
        assert_eq!(codes(&inst), vec!["travel-matrix-shape"]);
        inst.transport.travel = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(codes(&inst).is_empty());
    }
}
