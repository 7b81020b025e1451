//! Priority dispatching rules. Every rule is an argmin over a key; ties go to
//! the first candidate, and callers present candidates in ascending id order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::simcore::SimState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SequencingRule {
    Spt,
    Lpt,
    Edd,
    Fifo,
    Lifo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RoutingRule {
    /// Least queued processing time.
    Sq,
    /// Fewest queued operations.
    Lqe,
    /// Shortest setup from the machine's last job.
    Sst,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unknown rule {0:?}")]
pub struct UnknownRule(pub String);

fn argmin<T>(items: &[T], key: impl Fn(&T) -> f64) -> usize {
    let mut best = 0;
    let mut best_key = f64::INFINITY;
    for (i, it) in items.iter().enumerate() {
        let k = key(it);
        if k < best_key || (i == 0 && k == f64::INFINITY) {
            best = i;
            best_key = k;
        }
    }
    best
}

impl SequencingRule {
    pub const ALL: [SequencingRule; 5] = [
        SequencingRule::Spt,
        SequencingRule::Lpt,
        SequencingRule::Edd,
        SequencingRule::Fifo,
        SequencingRule::Lifo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SequencingRule::Spt => "SPT",
            SequencingRule::Lpt => "LPT",
            SequencingRule::Edd => "EDD",
            SequencingRule::Fifo => "FIFO",
            SequencingRule::Lifo => "LIFO",
        }
    }

    pub fn from_index(i: usize) -> Option<SequencingRule> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&r| r == self).expect("listed")
    }

    /// Value minimized by the rule for operation `op` of `job`. `machine` is
    /// the deciding machine, if any (it scales durations by speed).
    pub fn key(self, state: &SimState, machine: Option<usize>, job: usize, op: usize) -> f64 {
        let inst = state.instance();
        let dur = || match machine {
            Some(m) => inst.nominal_duration(job, op, m),
            None => inst.jobs[job].operations[op].duration,
        };
        match self {
            SequencingRule::Spt => dur(),
            SequencingRule::Lpt => -dur(),
            SequencingRule::Edd => inst.jobs[job].due.unwrap_or(f64::INFINITY),
            SequencingRule::Fifo => state.job_since(job),
            SequencingRule::Lifo => -state.job_since(job),
        }
    }

    /// Index into `candidates` of the chosen `(job, op)`.
    pub fn choose(self, state: &SimState, machine: Option<usize>, candidates: &[(usize, usize)]) -> usize {
        argmin(candidates, |&(j, k)| self.key(state, machine, j, k))
    }
}

impl RoutingRule {
    pub const ALL: [RoutingRule; 3] = [RoutingRule::Sq, RoutingRule::Lqe, RoutingRule::Sst];

    pub fn name(self) -> &'static str {
        match self {
            RoutingRule::Sq => "SQ",
            RoutingRule::Lqe => "LQE",
            RoutingRule::Sst => "SST",
        }
    }

    pub fn from_index(i: usize) -> Option<RoutingRule> {
        Self::ALL.get(i).copied()
    }

    pub fn key(self, state: &SimState, job: usize, machine: usize) -> f64 {
        match self {
            RoutingRule::Sq => state.queued_work(machine),
            RoutingRule::Lqe => state.queue_len(machine) as f64,
            RoutingRule::Sst => state
                .instance()
                .setup_time(machine, state.last_job(machine), job),
        }
    }

    /// Index into `options` of the chosen `(op, machine)`.
    pub fn choose(self, state: &SimState, job: usize, options: &[(usize, usize)]) -> usize {
        argmin(options, |&(_, m)| self.key(state, job, m))
    }
}

macro_rules! name_impls {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $t {
            type Err = UnknownRule;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|r| r.name().eq_ignore_ascii_case(s))
                    .ok_or_else(|| UnknownRule(s.to_string()))
            }
        }
    };
}

name_impls!(SequencingRule);
name_impls!(RoutingRule);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmin_prefers_first_on_ties() {
        assert_eq!(argmin(&[5.0, 3.0, 7.0], |x| *x), 1);
        assert_eq!(argmin(&[2.0, 2.0], |x| *x), 0);
        assert_eq!(argmin(&[f64::INFINITY, f64::INFINITY], |x| *x), 0);
        assert_eq!(argmin(&[f64::INFINITY, 1.0], |x| *x), 1);
    }

    #[test]
    fn names_parse() {
        assert_eq!("spt".parse::<SequencingRule>().unwrap(), SequencingRule::Spt);
        assert_eq!("LQE".parse::<RoutingRule>().unwrap(), RoutingRule::Lqe);
        assert!("XYZ".parse::<RoutingRule>().is_err());
        assert_eq!(serde_json::to_string(&SequencingRule::Fifo).unwrap(), "\"FIFO\"");
        for r in SequencingRule::ALL {
            assert_eq!(SequencingRule::from_index(r.index()), Some(r));
        }
    }
}
