//! Scheduling objectives: per-job and per-resource metrics over a
//! [`ScheduleRecord`], scalarization, and Pareto-front filtering.

mod metrics;
mod pareto;
mod record;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::notation::Aggregation;

pub use metrics::{
    evaluate_objective, evaluate_objective_with, evaluate_term, job_metrics, makespan,
    metric_report, objective_to_date, resource_metrics, throughput, FleetMetrics, JobMetrics,
    MachineMetrics, MetricOptions, MetricReport, ObjectiveValue, ResourceMetrics, Throughput,
};
pub use pareto::{dominates, pareto_front, Direction};
pub use record::{BusySegment, Interval, JobRecord, MachineRecord, OpRecord, ScheduleRecord, VehicleRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Makespan,
    ThroughputJobs,
    ThroughputOps,
    Flow,
    IdleJob,
    Lateness,
    Tardiness,
    UnitCost,
    Earliness,
    UtilizationMachine,
    UtilizationTransport,
    BufferLength,
    BufferedTime,
    SetupTimeTotal,
    InventoryLevel,
}

impl MetricId {
    pub const ALL: [MetricId; 15] = [
        MetricId::Makespan,
        MetricId::ThroughputJobs,
        MetricId::ThroughputOps,
        MetricId::Flow,
        MetricId::IdleJob,
        MetricId::Lateness,
        MetricId::Tardiness,
        MetricId::UnitCost,
        MetricId::Earliness,
        MetricId::UtilizationMachine,
        MetricId::UtilizationTransport,
        MetricId::BufferLength,
        MetricId::BufferedTime,
        MetricId::SetupTimeTotal,
        MetricId::InventoryLevel,
    ];

    /// Symbol used in the γ field.
    pub fn symbol(self) -> &'static str {
        match self {
            MetricId::Makespan => "C",
            MetricId::ThroughputJobs => "Tpt^j",
            MetricId::ThroughputOps => "Tpt^o",
            MetricId::Flow => "F",
            MetricId::IdleJob => "I",
            MetricId::Lateness => "L",
            MetricId::Tardiness => "T",
            MetricId::UnitCost => "U",
            MetricId::Earliness => "E",
            MetricId::UtilizationMachine => "Utl",
            MetricId::UtilizationTransport => "Utl_tr",
            MetricId::BufferLength => "Bf",
            MetricId::BufferedTime => "Bft",
            MetricId::SetupTimeTotal => "Stp",
            MetricId::InventoryLevel => "Inv",
        }
    }

    pub fn from_symbol(s: &str) -> Option<MetricId> {
        MetricId::ALL.iter().copied().find(|m| m.symbol() == s)
    }

    /// Metrics defined per job (F, I, L, T, U, E).
    pub fn is_job_metric(self) -> bool {
        matches!(
            self,
            MetricId::Flow
                | MetricId::IdleJob
                | MetricId::Lateness
                | MetricId::Tardiness
                | MetricId::UnitCost
                | MetricId::Earliness
        )
    }

    /// Lateness-family metrics need due dates.
    pub fn needs_due_dates(self) -> bool {
        matches!(
            self,
            MetricId::Lateness | MetricId::Tardiness | MetricId::UnitCost | MetricId::Earliness
        )
    }

    pub fn admits(self, agg: Aggregation) -> bool {
        match self {
            MetricId::Makespan => agg == Aggregation::Max,
            MetricId::ThroughputJobs | MetricId::ThroughputOps | MetricId::InventoryLevel => {
                agg == Aggregation::Ave
            }
            _ => true,
        }
    }

    pub fn default_aggregation(self) -> Aggregation {
        match self {
            MetricId::Makespan => Aggregation::Max,
            _ => Aggregation::Ave,
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            MetricId::ThroughputJobs
            | MetricId::ThroughputOps
            | MetricId::UtilizationMachine
            | MetricId::UtilizationTransport => Direction::Maximize,
            _ => Direction::Minimize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("job {0} has not finished")]
    Unfinished(usize),
    #[error("metric {metric:?} unavailable: {reason}")]
    MetricUnavailable { metric: MetricId, reason: String },
    #[error("evaluation time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("point {index} has {found} dimensions, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("{0:?} cannot be aggregated with {1:?}")]
    Aggregation(MetricId, Aggregation),
}
