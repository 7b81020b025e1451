use std::fmt::Write as _;

use super::{Instance, InstanceError, Job, Machine, Operation, TransportSpec, SCHEMA_VERSION};
use crate::notation::{parse_triplet, SetupKind};

fn format_err(line: usize, message: impl Into<String>) -> InstanceError {
    InstanceError::Format {
        line,
        message: message.into(),
    }
}

/// Parse the OR-Library job-shop format: a header `n m`, then one row per job
/// of `m` `(machine, duration)` pairs. Blank lines and `#` comments are skipped.
pub fn load_orlib(text: &str) -> Result<Instance, InstanceError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| format_err(1, "missing header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format_err(hline, format!("malformed header {header:?}")))?;
    let [n, m] = dims[..] else {
        return Err(format_err(hline, format!("header needs exactly `n m`, got {header:?}")));
    };
    if n == 0 || m == 0 {
        return Err(format_err(hline, "job and machine counts must be positive"));
    }

    let mut jobs = Vec::with_capacity(n);
    for j in 0..n {
        let (lno, row) = lines
            .next()
            .ok_or_else(|| format_err(hline + j + 1, format!("missing row for job {j}")))?;
        let values: Vec<i64> = row
            .split_whitespace()
            .map(|t| t.parse::<i64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format_err(lno, "non-integer entry"))?;
        if values.len() != 2 * m {
            return Err(format_err(
                lno,
                format!("expected {} entries, found {}", 2 * m, values.len()),
            ));
        }
        let mut operations = Vec::with_capacity(m);
        for (k, pair) in values.chunks(2).enumerate() {
            let (machine, duration) = (pair[0], pair[1]);
            if machine < 0 || machine as usize >= m {
                return Err(format_err(lno, format!("machine index {machine} out of range")));
            }
            if duration <= 0 {
                return Err(format_err(lno, format!("nonpositive duration {duration}")));
            }
            operations.push(Operation {
                op_type: machine as usize,
                duration: duration as f64,
                predecessors: if k == 0 { vec![] } else { vec![k - 1] },
            });
        }
        jobs.push(Job {
            operations,
            release: 0.0,
            due: None,
            family: None,
        });
    }
    if let Some((lno, _)) = lines.next() {
        return Err(format_err(lno, "trailing data after the last job row"));
    }

    Ok(Instance {
        schema_version: SCHEMA_VERSION,
        name: None,
        triplet: parse_triplet("Jm||C_max").expect("static triplet"),
        jobs,
        machines: (0..m).map(Machine::simple).collect(),
        transport: TransportSpec::default(),
        stochastic: Default::default(),
        setups: Default::default(),
        maintenance: vec![],
        demand: vec![],
    })
}

/// Write a chain-structured single-machine-per-type instance back to the
/// OR-Library format. Returns `None` for instances the format cannot express.
pub fn to_orlib(inst: &Instance) -> Option<String> {
    let m = inst.machines.len();
    if !matches!(inst.triplet.alpha.kind, SetupKind::Jm | SetupKind::Fm | SetupKind::Single)
        || inst.machines.iter().enumerate().any(|(i, mc)| mc.capabilities.iter().ne([i].iter()))
    {
        return None;
    }
    let mut out = format!("{} {}\n", inst.jobs.len(), m);
    for job in &inst.jobs {
        if job.operations.len() != m || job.operations.iter().any(|o| o.duration.fract() != 0.0) {
            return None;
        }
        let row: Vec<String> = job
            .operations
            .iter()
            .map(|o| format!("{} {}", o.op_type, o.duration as i64))
            .collect();
        writeln!(out, "{}", row.join(" ")).ok()?;
    }
    Some(out)
}

/// Fisher and Thompson 6x6 benchmark in OR-Library format (optimal makespan 55).
pub const FT06: &str = "6 6
2 1 0 3 1 6 3 7 5 3 4 6
1 8 2 5 4 10 5 10 0 10 3 4
2 5 3 4 5 8 0 9 1 1 4 7
1 5 0 5 2 5 3 3 4 8 5 9
2 9 1 3 4 5 5 4 0 3 3 1
1 3 3 3 5 9 0 10 4 4 2 1
";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let inst = load_orlib("2 2\n0 3 1 2\n1 2 0 4").unwrap();
        assert_eq!(inst.jobs.len(), 2);
        assert_eq!(inst.machines.len(), 2);
        let ops = |j: usize| -> Vec<(usize, f64)> {
            inst.jobs[j].operations.iter().map(|o| (o.op_type, o.duration)).collect()
        };
        assert_eq!(ops(0), vec![(0, 3.0), (1, 2.0)]);
        assert_eq!(ops(1), vec![(1, 2.0), (0, 4.0)]);
        assert_eq!(inst.jobs[1].operations[1].predecessors, vec![0]);
    }

    #[test]
    fn minimal() {
        let inst = load_orlib("1 1\n0 5").unwrap();
        assert_eq!(inst.jobs.len(), 1);
        assert_eq!(inst.jobs[0].operations[0].duration, 5.0);
    }

    #[test]
    fn ft06_checksum() {
        let inst = load_orlib(FT06).unwrap();
        assert_eq!((inst.jobs.len(), inst.machines.len()), (6, 6));
        let parsed: f64 = inst.jobs.iter().map(|j| j.total_work()).sum();
        // independent checksum: every second integer of each job row
        let file: i64 = FT06
            .lines()
            .skip(1)
            .flat_map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<i64>().unwrap())
                    .collect::<Vec<_>>()
                    .chunks(2)
                    .map(|c| c[1])
                    .collect::<Vec<_>>()
            })
            .sum();
        assert_eq!(parsed, file as f64);
        assert!(inst.jobs.iter().all(|j| j.operations.iter().all(|o| o.duration > 0.0)));
        assert_eq!(load_orlib(&to_orlib(&inst).unwrap()).unwrap(), inst);
    }

    #[test]
    fn errors() {
        let line = |text: &str| match load_orlib(text) {
            Err(InstanceError::Format { line, .. }) => line,
            other => panic!("expected a format error, got {other:?}"),
        };
        assert_eq!(line("2\n0 3"), 1);
        assert_eq!(line("x y\n"), 1);
        assert_eq!(line("1 2\n0 3 1"), 2);
        assert_eq!(line("1 2\n0 3 2 4"), 2);
        assert_eq!(line("1 1\n0 0"), 2);
        assert_eq!(line("1 1\n0 -2"), 2);
        assert_eq!(line("2 1\n0 3"), 3);
        assert_eq!(line("1 1\n0 3\n0 4"), 3);
    }

    #[test]
    fn comments_are_skipped() {
        let inst = load_orlib("# ft-like\n\n1 1\n# row\n0 5\n").unwrap();
        assert_eq!(inst.jobs[0].operations[0].duration, 5.0);
    }
}
