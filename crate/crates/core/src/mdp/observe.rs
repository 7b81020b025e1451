use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MdpError;
use crate::instance::TransportMode;
use crate::objectives::{resource_metrics, MetricOptions};
use crate::simcore::SimState;

/// Sentinel for padded operations in `T` and for operations not at a machine in `L`.
pub const NONE: i64 = -1;

/// The `(T, P, L, A, t, i)` state encoding. Rows are jobs, columns operation
/// slots padded to the longest job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    /// Operation type, or -1 for padding.
    pub types: Vec<Vec<i64>>,
    /// Remaining processing time; 0 once done and for padding.
    pub remaining: Vec<Vec<f64>>,
    /// Machine holding the operation (queued or processing), else -1.
    pub location: Vec<Vec<i64>>,
    /// Operation currently in progress.
    pub active: Vec<Vec<bool>>,
    pub t: f64,
    /// Resource asking for a decision.
    pub i: usize,
}

pub fn observe_raw(state: &SimState, resource: usize) -> RawObservation {
    let inst = state.instance();
    let width = inst.max_ops();
    let n = inst.n_jobs();
    let mut obs = RawObservation {
        types: vec![vec![NONE; width]; n],
        remaining: vec![vec![0.0; width]; n],
        location: vec![vec![NONE; width]; n],
        active: vec![vec![false; width]; n],
        t: state.time(),
        i: resource,
    };
    for (j, job) in inst.jobs.iter().enumerate() {
        for (k, op) in job.operations.iter().enumerate() {
            obs.types[j][k] = op.op_type as i64;
            obs.remaining[j][k] = state.remaining_op_time(j, k);
            obs.location[j][k] = state.op_location(j, k).map_or(NONE, |m| m as i64);
            obs.active[j][k] = state.op_active(j, k);
        }
    }
    obs
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureId {
    RemainingJobOps,
    RemainingJobProcessingTime,
    JobsInSystem,
    BufferRemainingTime,
    ResourceWorkload,
    RemainingVsBufferedRatio,
    ProductTypesInBuffer,
    EstimatedTotalTardiness,
    AvgMachineUtilization,
    AvgTransportUtilization,
    AvgBufferLength,
    SinkLevel,
}

impl FeatureId {
    pub const ALL: [FeatureId; 12] = [
        FeatureId::RemainingJobOps,
        FeatureId::RemainingJobProcessingTime,
        FeatureId::JobsInSystem,
        FeatureId::BufferRemainingTime,
        FeatureId::ResourceWorkload,
        FeatureId::RemainingVsBufferedRatio,
        FeatureId::ProductTypesInBuffer,
        FeatureId::EstimatedTotalTardiness,
        FeatureId::AvgMachineUtilization,
        FeatureId::AvgTransportUtilization,
        FeatureId::AvgBufferLength,
        FeatureId::SinkLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureId::RemainingJobOps => "remaining_job_ops",
            FeatureId::RemainingJobProcessingTime => "remaining_job_processing_time",
            FeatureId::JobsInSystem => "jobs_in_system",
            FeatureId::BufferRemainingTime => "buffer_remaining_time",
            FeatureId::ResourceWorkload => "resource_workload",
            FeatureId::RemainingVsBufferedRatio => "remaining_vs_buffered_ratio",
            FeatureId::ProductTypesInBuffer => "product_types_in_buffer",
            FeatureId::EstimatedTotalTardiness => "estimated_total_tardiness",
            FeatureId::AvgMachineUtilization => "avg_machine_utilization",
            FeatureId::AvgTransportUtilization => "avg_transport_utilization",
            FeatureId::AvgBufferLength => "avg_buffer_length",
            FeatureId::SinkLevel => "sink_level",
        }
    }

    /// Number of values the feature contributes: one per job, one per
    /// machine, or a scalar.
    pub fn width(self, n_jobs: usize, n_machines: usize) -> usize {
        match self {
            FeatureId::RemainingJobOps | FeatureId::RemainingJobProcessingTime => n_jobs,
            FeatureId::BufferRemainingTime
            | FeatureId::ResourceWorkload
            | FeatureId::RemainingVsBufferedRatio
            | FeatureId::ProductTypesInBuffer => n_machines,
            _ => 1,
        }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureId {
    type Err = MdpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureId::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| MdpError::UnknownFeature(s.to_string()))
    }
}

/// Check that every feature can be computed for the instance behind `state`.
pub fn check_features(state: &SimState, ids: &[FeatureId]) -> Result<(), MdpError> {
    for &id in ids {
        if id == FeatureId::AvgTransportUtilization
            && !matches!(state.instance().transport.mode, TransportMode::Fleet(_))
        {
            return Err(MdpError::FeatureInapplicable {
                feature: id,
                reason: "the instance has no transport fleet".into(),
            });
        }
    }
    Ok(())
}

fn remaining_job_time(state: &SimState, j: usize) -> f64 {
    (0..state.instance().jobs[j].operations.len())
        .map(|k| state.remaining_op_time(j, k))
        .sum()
}

fn buffered_time(state: &SimState, m: usize) -> f64 {
    state
        .input_buffer(m)
        .iter()
        .map(|&(j, k)| state.remaining_op_time(j, k))
        .sum()
}

/// Concatenated feature values, in the order of `ids`.
///
/// * `remaining_job_ops[j]`: operations of job j not yet finished.
/// * `remaining_job_processing_time[j]`: sum of remaining operation times.
/// * `jobs_in_system`: released, unfinished jobs.
/// * `buffer_remaining_time[i]`: sum of remaining times of ops in i's input buffer.
/// * `resource_workload[i]`: nominal work queued at or headed for i, plus i's
///   remaining current activity.
/// * `remaining_vs_buffered_ratio[i]`: remaining activity / (remaining activity
///   + buffered time), 0 when both are 0.
/// * `product_types_in_buffer[i]`: distinct job families in i's input buffer
///   (a job without a family is its own type).
/// * `estimated_total_tardiness`: realized tardiness of finished jobs plus
///   `max(0, t + remaining_j - d_j)` over unfinished jobs with a due date.
/// * `avg_machine_utilization`, `avg_transport_utilization`: mean utilization
///   over `[0, t]`, 0 at `t = 0`.
/// * `avg_buffer_length`: mean current input-buffer length over machines.
/// * `sink_level`: finished goods not yet consumed by demand.
pub fn compute_features(state: &SimState, ids: &[FeatureId]) -> Result<Vec<f64>, MdpError> {
    check_features(state, ids)?;
    let inst = state.instance();
    let n = inst.n_jobs();
    let m = inst.n_machines();
    let t = state.time();
    let rec = state.record();
    let resources = if t > 0.0 {
        resource_metrics(&rec, t, MetricOptions::default()).ok()
    } else {
        None
    };
    let mut out = Vec::new();
    for &id in ids {
        match id {
            FeatureId::RemainingJobOps => out.extend((0..n).map(|j| {
                (0..inst.jobs[j].operations.len())
                    .filter(|&k| !state.op_done(j, k))
                    .count() as f64
            })),
            FeatureId::RemainingJobProcessingTime => out.extend((0..n).map(|j| remaining_job_time(state, j))),
            FeatureId::JobsInSystem => out.push((0..n).filter(|&j| state.in_system(j)).count() as f64),
            FeatureId::BufferRemainingTime => out.extend((0..m).map(|i| buffered_time(state, i))),
            FeatureId::ResourceWorkload => {
                out.extend((0..m).map(|i| state.queued_work(i) + state.remaining_activity(i)))
            }
            FeatureId::RemainingVsBufferedRatio => out.extend((0..m).map(|i| {
                let a = state.remaining_activity(i);
                let b = buffered_time(state, i);
                if a + b > 0.0 {
                    a / (a + b)
                } else {
                    0.0
                }
            })),
            FeatureId::ProductTypesInBuffer => out.extend((0..m).map(|i| {
                let types: BTreeSet<(bool, usize)> = state
                    .input_buffer(i)
                    .iter()
                    .map(|&(j, _)| match inst.jobs[j].family {
                        Some(f) => (true, f),
                        None => (false, j),
                    })
                    .collect();
                types.len() as f64
            })),
            FeatureId::EstimatedTotalTardiness => {
                let mut total = 0.0;
                for (j, job) in inst.jobs.iter().enumerate() {
                    let Some(d) = job.due else { continue };
                    total += match rec.jobs[j].completion {
                        Some(c) => (c - d).max(0.0),
                        None => (t + remaining_job_time(state, j) - d).max(0.0),
                    };
                }
                out.push(total);
            }
            FeatureId::AvgMachineUtilization => out.push(resources.as_ref().map_or(0.0, |r| {
                r.machines.iter().map(|x| x.utilization).sum::<f64>() / m as f64
            })),
            FeatureId::AvgTransportUtilization => out.push(
                resources
                    .as_ref()
                    .and_then(|r| r.fleet.as_ref())
                    .map_or(0.0, |f| f.utilization),
            ),
            FeatureId::AvgBufferLength => {
                out.push((0..m).map(|i| state.input_buffer(i).len()).sum::<usize>() as f64 / m as f64)
            }
            FeatureId::SinkLevel => out.push(state.sink_level() as f64),
        }
    }
    Ok(out)
}
