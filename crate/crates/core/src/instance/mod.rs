//! Concrete problem instances: jobs, operations, machines, transport and
//! stochastic specifications, plus OR-Library ingestion and seeded generation.

mod derive;
mod generate;
mod orlib;
mod validate;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::notation::{ProblemTriplet, Violation};
use crate::rng::Distribution;

pub use derive::derive_triplet;
pub use generate::{generate_instance, Shape};
pub use orlib::{load_orlib, to_orlib, FT06};
pub use validate::validate_instance;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Operation {
    /// Work-center type that must process the operation.
    pub op_type: usize,
    /// Base processing time `p_ji` at speed 1.
    pub duration: f64,
    /// Operation indices within the same job that must finish first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predecessors: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub operations: Vec<Operation>,
    /// Release date. Ignored when a stochastic release process is present.
    #[serde(default)]
    pub release: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub due: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<usize>,
}

impl Job {
    pub fn total_work(&self) -> f64 {
        self.operations.iter().map(|o| o.duration).sum()
    }
}

/// Machine speed: one scalar, or one scalar per job (unrelated machines).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Speed {
    Uniform(f64),
    PerJob(Vec<f64>),
}

impl Default for Speed {
    fn default() -> Self {
        Speed::Uniform(1.0)
    }
}

impl Speed {
    pub fn for_job(&self, job: usize) -> f64 {
        match self {
            Speed::Uniform(v) => *v,
            Speed::PerJob(vs) => vs.get(job).copied().unwrap_or(1.0),
        }
    }

    fn is_one(&self) -> bool {
        *self == Speed::Uniform(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BatchSpec {
    /// Up to `size` same-type operations processed together for `duration`.
    Fixed { size: usize, duration: f64 },
    /// Up to `capacity` operations; the batch takes its longest member.
    Dynamic { capacity: usize },
}

impl BatchSpec {
    pub fn capacity(&self) -> usize {
        match self {
            BatchSpec::Fixed { size, .. } => *size,
            BatchSpec::Dynamic { capacity } => *capacity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub work_center: usize,
    #[serde(default, skip_serializing_if = "Speed::is_one")]
    pub speed: Speed,
    /// Operation types the machine can process.
    pub capabilities: BTreeSet<usize>,
    /// Jobs the machine may process (`M_i`); `None` admits all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eligible_jobs: Option<BTreeSet<usize>>,
    /// `None` is unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_buffer: Option<usize>,
    /// `None` is unbounded; 0 keeps a finished job on the machine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_buffer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchSpec>,
    /// Time the machine joins its work center (scripted capacity change).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub available_from: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl Machine {
    /// A plain machine serving exactly its own work center.
    pub fn simple(work_center: usize) -> Self {
        Machine {
            work_center,
            speed: Speed::default(),
            capabilities: BTreeSet::from([work_center]),
            eligible_jobs: None,
            input_buffer: None,
            output_buffer: None,
            batch: None,
            available_from: 0.0,
        }
    }

    pub fn can_process(&self, job: usize, op_type: usize) -> bool {
        self.capabilities.contains(&op_type)
            && self.eligible_jobs.as_ref().is_none_or(|s| s.contains(&job))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    #[default]
    None,
    Infinite,
    Fleet(u32),
}

/// Travel times are indexed by location: machines `0..M`, then the depot `M`
/// where jobs are released and finished jobs leave.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TransportSpec {
    pub mode: TransportMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub travel: Vec<Vec<f64>>,
    /// Starting location per vehicle; defaults to the depot.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub home: Vec<usize>,
}

impl TransportSpec {
    pub fn fleet_size(&self) -> usize {
        match self.mode {
            TransportMode::Fleet(n) => n as usize,
            _ => 0,
        }
    }

    pub fn travel_time(&self, from: usize, to: usize) -> f64 {
        self.travel
            .get(from)
            .and_then(|row| row.get(to))
            .copied()
            .unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseProcess {
    /// Job `j` arrives `X_j` after job `j-1` (the first after time 0).
    Interarrival(Distribution),
    /// One release-date distribution per job.
    PerJob(Vec<Distribution>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakdownProcess {
    pub machine: usize,
    /// Time between a repair and the next failure.
    pub uptime: Distribution,
    pub repair: Distribution,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct StochasticSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release: Option<ReleaseProcess>,
    /// Multiplicative deviation applied to every base duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_factor: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breakdowns: Vec<BreakdownProcess>,
    /// Demand inter-arrival times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<Distribution>,
}

impl StochasticSpec {
    pub fn is_empty(&self) -> bool {
        self.release.is_none()
            && self.duration_factor.is_none()
            && self.breakdowns.is_empty()
            && self.demand.is_none()
    }
}

/// A deterministic down window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Maintenance {
    pub machine: usize,
    pub start: f64,
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "times", rename_all = "snake_case")]
pub enum SetupTimes {
    #[default]
    None,
    /// `[family_prev][family_next]`
    Family(Vec<Vec<f64>>),
    /// `[job_prev][job_next]`
    Job(Vec<Vec<f64>>),
    /// `[machine][job_prev][job_next]`
    JobMachine(Vec<Vec<Vec<f64>>>),
}

impl SetupTimes {
    pub fn is_none(&self) -> bool {
        *self == SetupTimes::None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub triplet: ProblemTriplet,
    pub jobs: Vec<Job>,
    pub machines: Vec<Machine>,
    #[serde(default)]
    pub transport: TransportSpec,
    #[serde(default, skip_serializing_if = "StochasticSpec::is_empty")]
    pub stochastic: StochasticSpec,
    #[serde(default, skip_serializing_if = "SetupTimes::is_none")]
    pub setups: SetupTimes,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub maintenance: Vec<Maintenance>,
    /// Deterministic demand times.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demand: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("shape does not fit the triplet: {0}")]
    ShapeMismatch(String),
    #[error("instance violates {} rule(s): {}", .0.len(), .0.iter().map(|v| v.code.as_str()).collect::<Vec<_>>().join(", "))]
    Invalid(Vec<Violation>),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Instance {
    pub fn n_jobs(&self) -> usize {
        self.jobs.len()
    }

    pub fn n_machines(&self) -> usize {
        self.machines.len()
    }

    /// Location index of the depot in the travel matrix.
    pub fn depot(&self) -> usize {
        self.machines.len()
    }

    pub fn max_ops(&self) -> usize {
        self.jobs.iter().map(|j| j.operations.len()).max().unwrap_or(0)
    }

    pub fn n_op_types(&self) -> usize {
        self.jobs
            .iter()
            .flat_map(|j| j.operations.iter().map(|o| o.op_type + 1))
            .chain(self.machines.iter().flat_map(|m| m.capabilities.iter().map(|c| c + 1)))
            .max()
            .unwrap_or(0)
    }

    /// Machines able to process operation `op` of job `job`, ignoring availability.
    pub fn eligible_machines(&self, job: usize, op: usize) -> Vec<usize> {
        let ty = self.jobs[job].operations[op].op_type;
        (0..self.machines.len())
            .filter(|&i| self.machines[i].can_process(job, ty))
            .collect()
    }

    /// Processing time of `op` of `job` on `machine` before stochastic deviation.
    pub fn nominal_duration(&self, job: usize, op: usize, machine: usize) -> f64 {
        self.jobs[job].operations[op].duration / self.machines[machine].speed.for_job(job)
    }

    /// Setup time on `machine` when switching from `prev` to `next`.
    pub fn setup_time(&self, machine: usize, prev: Option<usize>, next: usize) -> f64 {
        let Some(prev) = prev else { return 0.0 };
        let lookup = |m: &Vec<Vec<f64>>, a: usize, b: usize| {
            m.get(a).and_then(|r| r.get(b)).copied().unwrap_or(0.0)
        };
        match &self.setups {
            SetupTimes::None => 0.0,
            SetupTimes::Family(m) => match (self.jobs[prev].family, self.jobs[next].family) {
                (Some(a), Some(b)) => lookup(m, a, b),
                _ => 0.0,
            },
            SetupTimes::Job(m) => lookup(m, prev, next),
            SetupTimes::JobMachine(t) => t.get(machine).map(|m| lookup(m, prev, next)).unwrap_or(0.0),
        }
    }

    /// Expected release date under the stochastic release process, if any.
    pub fn expected_release(&self, job: usize) -> f64 {
        match &self.stochastic.release {
            Some(ReleaseProcess::Interarrival(d)) => d.mean() * (job + 1) as f64,
            Some(ReleaseProcess::PerJob(ds)) => ds.get(job).map(|d| d.mean()).unwrap_or(0.0),
            None => self.jobs[job].release,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Instance, InstanceError> {
        let inst: Instance = serde_json::from_str(text)?;
        if inst.schema_version != SCHEMA_VERSION {
            return Err(InstanceError::SchemaVersion(inst.schema_version));
        }
        Ok(inst)
    }

    /// Parse native JSON, falling back to the OR-Library text format.
    pub fn load(text: &str) -> Result<Instance, InstanceError> {
        if text.trim_start().starts_with('{') {
            Instance::from_json(text)
        } else {
            load_orlib(text)
        }
    }

    /// Jobs `range` as a stand-alone instance (ids renumbered from 0).
    pub fn sub_instance(&self, range: std::ops::Range<usize>) -> Instance {
        let mut out = self.clone();
        out.jobs = self.jobs[range.clone()].to_vec();
        for m in &mut out.machines {
            if let Speed::PerJob(v) = &m.speed {
                m.speed = Speed::PerJob(v[range.clone()].to_vec());
            }
            if let Some(e) = &m.eligible_jobs {
                m.eligible_jobs = Some(
                    e.iter()
                        .filter(|j| range.contains(j))
                        .map(|j| j - range.start)
                        .collect(),
                );
            }
        }
        out.setups = match &self.setups {
            SetupTimes::Job(m) => SetupTimes::Job(
                m[range.clone()].iter().map(|r| r[range.clone()].to_vec()).collect(),
            ),
            SetupTimes::JobMachine(t) => SetupTimes::JobMachine(
                t.iter()
                    .map(|m| m[range.clone()].iter().map(|r| r[range.clone()].to_vec()).collect())
                    .collect(),
            ),
            other => other.clone(),
        };
        if let Some(ReleaseProcess::PerJob(ds)) = &self.stochastic.release {
            out.stochastic.release = Some(ReleaseProcess::PerJob(ds[range].to_vec()));
        }
        out
    }
}
