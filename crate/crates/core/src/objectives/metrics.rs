use serde::{Deserialize, Serialize};

use super::record::step_integral;
use super::{MetricId, ObjectiveError, ScheduleRecord};
use crate::notation::{Aggregation, MetricTerm, ObjectiveSpec};

/// Per-job timeliness table. Entries are `None` while the job is pending or,
/// for the lateness family, when the job has no due date.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobMetrics {
    pub job: usize,
    pub finished: bool,
    pub flow: Option<f64>,
    pub idle: Option<f64>,
    pub lateness: Option<f64>,
    pub tardiness: Option<f64>,
    pub unit_cost: Option<f64>,
    pub earliness: Option<f64>,
}

impl JobMetrics {
    fn value(&self, metric: MetricId) -> Option<f64> {
        match metric {
            MetricId::Flow => self.flow,
            MetricId::IdleJob => self.idle,
            MetricId::Lateness => self.lateness,
            MetricId::Tardiness => self.tardiness,
            MetricId::UnitCost => self.unit_cost,
            MetricId::Earliness => self.earliness,
            _ => None,
        }
    }
}

pub fn job_metrics(rec: &ScheduleRecord) -> Vec<JobMetrics> {
    rec.jobs
        .iter()
        .enumerate()
        .map(|(j, job)| {
            let Some(c) = job.completion else {
                return JobMetrics {
                    job: j,
                    finished: false,
                    flow: None,
                    idle: None,
                    lateness: None,
                    tardiness: None,
                    unit_cost: None,
                    earliness: None,
                };
            };
            let flow = c - job.release;
            let lateness = job.due.map(|d| c - d);
            JobMetrics {
                job: j,
                finished: true,
                flow: Some(flow),
                idle: Some((flow - job.processing_sum()).max(0.0)), // rounding can dip below zero
                lateness,
                tardiness: lateness.map(|l| l.max(0.0)),
                unit_cost: job.due.map(|d| if c > d { 1.0 } else { 0.0 }),
                earliness: lateness.map(|l| l.min(0.0).abs()),
            }
        })
        .collect()
}

pub fn makespan(rec: &ScheduleRecord) -> Result<f64, ObjectiveError> {
    let mut best = 0.0f64;
    for (j, job) in rec.jobs.iter().enumerate() {
        best = best.max(job.completion.ok_or(ObjectiveError::Unfinished(j))?);
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub jobs: f64,
    pub ops: f64,
}

pub fn throughput(rec: &ScheduleRecord, t: f64) -> Result<Throughput, ObjectiveError> {
    if !(t > 0.0) {
        return Err(ObjectiveError::NonPositiveTime(t));
    }
    let jobs = rec
        .jobs
        .iter()
        .filter(|j| j.completion.is_some_and(|c| c <= t))
        .count();
    let ops = rec
        .jobs
        .iter()
        .flat_map(|j| j.ops.iter())
        .filter(|o| o.end.is_some_and(|e| e <= t))
        .count();
    Ok(Throughput {
        jobs: jobs as f64 / t,
        ops: ops as f64 / t,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Divide utilization by up-time instead of elapsed time.
    pub exclude_down_time: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineMetrics {
    pub utilization: f64,
    pub buffer_length_avg: f64,
    pub buffered_time: f64,
    pub setup_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetMetrics {
    pub utilization: f64,
    pub per_vehicle: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceMetrics {
    pub machines: Vec<MachineMetrics>,
    pub fleet: Option<FleetMetrics>,
}

pub fn resource_metrics(
    rec: &ScheduleRecord,
    t: f64,
    opts: MetricOptions,
) -> Result<ResourceMetrics, ObjectiveError> {
    if !(t > 0.0) {
        return Err(ObjectiveError::NonPositiveTime(t));
    }
    let machines = rec
        .machines
        .iter()
        .map(|m| {
            let worked: f64 = m
                .busy
                .iter()
                .filter(|b| b.activity_end.is_some_and(|e| e <= t))
                .map(|b| b.interval.clipped_len(t))
                .sum();
            let denom = if opts.exclude_down_time {
                t - m.down.iter().map(|d| d.clipped_len(t)).sum::<f64>()
            } else {
                t
            };
            let utilization = if denom > 0.0 {
                (worked / denom).min(1.0)
            } else {
                0.0
            };
            let buffered_time = step_integral(&m.buffer, t);
            MachineMetrics {
                utilization,
                buffer_length_avg: buffered_time / t,
                buffered_time,
                setup_total: m.setup.iter().map(|s| s.clipped_len(t)).sum(),
            }
        })
        .collect();
    let fleet = if rec.vehicles.is_empty() {
        None
    } else {
        let per_vehicle: Vec<f64> = rec
            .vehicles
            .iter()
            .map(|v| v.loaded.iter().map(|i| i.clipped_len(t)).sum::<f64>() / t)
            .collect();
        Some(FleetMetrics {
            utilization: per_vehicle.iter().sum::<f64>() / per_vehicle.len() as f64,
            per_vehicle,
        })
    };
    Ok(ResourceMetrics { machines, fleet })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectiveValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ObjectiveValue {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            ObjectiveValue::Scalar(v) => Some(*v),
            ObjectiveValue::Vector(_) => None,
        }
    }
}

fn aggregate(values: &[f64], agg: Aggregation, population: usize) -> f64 {
    match agg {
        Aggregation::Ave => {
            if population == 0 {
                0.0
            } else {
                values.iter().sum::<f64>() / population as f64
            }
        }
        Aggregation::Max => values.iter().copied().fold(0.0f64, f64::max),
        Aggregation::Sum => values.iter().sum(),
        Aggregation::Count => values.iter().filter(|v| **v > 0.0).count() as f64,
    }
}

/// Per-entity values for a metric; `strict` requires every job to be finished.
fn entity_values(
    rec: &ScheduleRecord,
    metric: MetricId,
    t: f64,
    opts: MetricOptions,
    strict: bool,
) -> Result<Vec<f64>, ObjectiveError> {
    if metric.is_job_metric() || metric == MetricId::Makespan {
        let table = job_metrics(rec);
        let mut out = Vec::with_capacity(table.len());
        for row in &table {
            if !row.finished {
                if strict {
                    return Err(ObjectiveError::Unfinished(row.job));
                }
                continue;
            }
            if metric == MetricId::Makespan {
                out.push(rec.jobs[row.job].completion.unwrap_or(0.0));
                continue;
            }
            match row.value(metric) {
                Some(v) => out.push(v),
                None => {
                    return Err(ObjectiveError::MetricUnavailable {
                        metric,
                        reason: format!("job {} has no due date", row.job),
                    })
                }
            }
        }
        return Ok(out);
    }
    match metric {
        MetricId::ThroughputJobs => Ok(vec![throughput(rec, t)?.jobs]),
        MetricId::ThroughputOps => Ok(vec![throughput(rec, t)?.ops]),
        MetricId::InventoryLevel => {
            if !(t > 0.0) {
                return Err(ObjectiveError::NonPositiveTime(t));
            }
            Ok(vec![step_integral(&rec.sink, t) / t])
        }
        MetricId::UtilizationTransport => {
            let r = resource_metrics(rec, t, opts)?;
            r.fleet
                .map(|f| f.per_vehicle)
                .ok_or(ObjectiveError::MetricUnavailable {
                    metric,
                    reason: "no transport fleet".into(),
                })
        }
        _ => {
            let r = resource_metrics(rec, t, opts)?;
            Ok(r.machines
                .iter()
                .map(|m| match metric {
                    MetricId::UtilizationMachine => m.utilization,
                    MetricId::BufferLength => m.buffer_length_avg,
                    MetricId::BufferedTime => m.buffered_time,
                    _ => m.setup_total,
                })
                .collect())
        }
    }
}

fn term_value(
    rec: &ScheduleRecord,
    term: &MetricTerm,
    t: f64,
    opts: MetricOptions,
    strict: bool,
) -> Result<f64, ObjectiveError> {
    if !term.metric.admits(term.aggregation) {
        return Err(ObjectiveError::Aggregation(term.metric, term.aggregation));
    }
    let values = entity_values(rec, term.metric, t, opts, strict)?;
    let population = if term.metric.is_job_metric() {
        rec.jobs.len()
    } else {
        values.len()
    };
    Ok(aggregate(&values, term.aggregation, population))
}

pub fn evaluate_term(
    rec: &ScheduleRecord,
    term: &MetricTerm,
    t: f64,
    opts: MetricOptions,
) -> Result<f64, ObjectiveError> {
    term_value(rec, term, t, opts, true)
}

pub fn evaluate_objective(
    rec: &ScheduleRecord,
    spec: &ObjectiveSpec,
    t: f64,
) -> Result<ObjectiveValue, ObjectiveError> {
    evaluate_objective_with(rec, spec, t, MetricOptions::default())
}

pub fn evaluate_objective_with(
    rec: &ScheduleRecord,
    spec: &ObjectiveSpec,
    t: f64,
    opts: MetricOptions,
) -> Result<ObjectiveValue, ObjectiveError> {
    match spec {
        ObjectiveSpec::Single(term) => Ok(ObjectiveValue::Scalar(evaluate_term(rec, term, t, opts)?)),
        ObjectiveSpec::Scalarized(ws) => {
            let mut total = 0.0;
            for (w, term) in ws {
                total += w * evaluate_term(rec, term, t, opts)?;
            }
            Ok(ObjectiveValue::Scalar(total))
        }
        ObjectiveSpec::ParetoSet(ts) => Ok(ObjectiveValue::Vector(
            ts.iter()
                .map(|term| evaluate_term(rec, term, t, opts))
                .collect::<Result<_, _>>()?,
        )),
    }
}

/// Scalar objective accumulated so far: job metrics only count finished jobs
/// (averages still divide by the full job count), so additive objectives
/// telescope across steps.
pub fn objective_to_date(
    rec: &ScheduleRecord,
    spec: &ObjectiveSpec,
    t: f64,
) -> Result<f64, ObjectiveError> {
    let opts = MetricOptions::default();
    let at = |term: &MetricTerm| -> Result<f64, ObjectiveError> {
        if !term.metric.is_job_metric() && term.metric != MetricId::Makespan && !(t > 0.0) {
            return Ok(0.0);
        }
        term_value(rec, term, t, opts, false)
    };
    match spec {
        ObjectiveSpec::Single(term) => at(term),
        ObjectiveSpec::Scalarized(ws) => {
            let mut total = 0.0;
            for (w, term) in ws {
                total += w * at(term)?;
            }
            Ok(total)
        }
        ObjectiveSpec::ParetoSet(_) => Err(ObjectiveError::MetricUnavailable {
            metric: MetricId::Makespan,
            reason: "a pareto objective has no scalar value".into(),
        }),
    }
}

/// Serializable single-metric report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: MetricId,
    pub aggregation: Aggregation,
    pub value: f64,
    pub per_entity: Vec<f64>,
}

pub fn metric_report(
    rec: &ScheduleRecord,
    term: &MetricTerm,
    t: f64,
) -> Result<MetricReport, ObjectiveError> {
    let opts = MetricOptions::default();
    Ok(MetricReport {
        metric: term.metric,
        aggregation: term.aggregation,
        value: evaluate_term(rec, term, t, opts)?,
        per_entity: entity_values(rec, term.metric, t, opts, true)?,
    })
}
