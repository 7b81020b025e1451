use serde::{Deserialize, Serialize};

/// Closed-open time interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Length of the part of this interval inside `[0, t]`.
    pub fn clipped_len(&self, t: f64) -> f64 {
        (self.end.min(t) - self.start.max(0.0)).max(0.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpRecord {
    /// Processing start `s_ji` (after any setup).
    pub start: Option<f64>,
    /// Realized processing duration.
    pub duration: Option<f64>,
    pub end: Option<f64>,
    pub machine: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub release: f64,
    pub due: Option<f64>,
    pub completion: Option<f64>,
    pub ops: Vec<OpRecord>,
}

impl JobRecord {
    pub fn processing_sum(&self) -> f64 {
        self.ops.iter().filter_map(|o| o.duration).sum()
    }
}

/// A busy segment. `activity_end` is set once the whole activity it belongs
/// to (which may span several segments when interrupted) has finished.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusySegment {
    pub interval: Interval,
    pub activity_end: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MachineRecord {
    pub busy: Vec<BusySegment>,
    pub setup: Vec<Interval>,
    pub down: Vec<Interval>,
    /// Input-buffer occupancy as a step function: `(time, count)` from `time` on.
    pub buffer: Vec<(f64, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub loaded: Vec<Interval>,
}

/// Everything the metric library needs about a (partial) schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRecord {
    /// Time the record was taken.
    pub horizon: f64,
    pub jobs: Vec<JobRecord>,
    pub machines: Vec<MachineRecord>,
    pub vehicles: Vec<VehicleRecord>,
    /// Finished-goods sink level as a step function.
    pub sink: Vec<(f64, usize)>,
}

/// Time integral of a step function over `[0, t]`.
pub(crate) fn step_integral(steps: &[(f64, usize)], t: f64) -> f64 {
    let mut total = 0.0;
    for (i, &(at, level)) in steps.iter().enumerate() {
        if at >= t {
            break;
        }
        let until = steps.get(i + 1).map(|s| s.0).unwrap_or(t).min(t);
        total += (until - at.max(0.0)).max(0.0) * level as f64;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_of_steps() {
        let s = [(0.0, 2), (4.0, 1), (6.0, 0)];
        assert_eq!(step_integral(&s, 10.0), 10.0);
        assert_eq!(step_integral(&s, 5.0), 9.0);
        assert_eq!(step_integral(&[], 5.0), 0.0);
    }
}
