use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::instance::{Instance, ReleaseProcess};
use crate::rng::{RngStream, BREAKDOWNS, DEMAND, RELEASES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExoKind {
    JobRelease,
    BreakdownStart,
    BreakdownEnd,
    DemandArrival,
    MachineAdded,
}

impl ExoKind {
    pub const ALL: [ExoKind; 5] = [
        ExoKind::JobRelease,
        ExoKind::BreakdownStart,
        ExoKind::BreakdownEnd,
        ExoKind::DemandArrival,
        ExoKind::MachineAdded,
    ];

    pub fn is_stochastic_in(self, inst: &Instance) -> bool {
        match self {
            ExoKind::JobRelease => inst.stochastic.release.is_some(),
            ExoKind::BreakdownStart | ExoKind::BreakdownEnd => !inst.stochastic.breakdowns.is_empty(),
            ExoKind::DemandArrival => inst.stochastic.demand.is_some(),
            ExoKind::MachineAdded => false,
        }
    }
}

/// Priority among kinds at equal times (lower fires first).
pub(crate) fn priority(kind: &EventKind) -> u8 {
    match kind {
        EventKind::Exo(ExoKind::BreakdownEnd) => 0,
        EventKind::Exo(ExoKind::MachineAdded) => 1,
        EventKind::Exo(ExoKind::JobRelease) => 2,
        EventKind::Exo(ExoKind::DemandArrival) => 3,
        EventKind::ProcessEnd
        | EventKind::SetupEnd
        | EventKind::TransitArrive
        | EventKind::VehicleArrive => 4,
        EventKind::Exo(ExoKind::BreakdownStart) => 5,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExogenousEvent {
    pub time: f64,
    pub kind: ExoKind,
    /// Job id for releases, machine id for breakdowns and capacity changes,
    /// running index for demand arrivals.
    pub payload: usize,
    pub sequence_no: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Exo(ExoKind),
    ProcessEnd,
    SetupEnd,
    TransitArrive,
    VehicleArrive,
}

/// Total order on pending events: time, kind priority, machine, job, sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct EventKey {
    pub time: f64,
    pub priority: u8,
    pub machine: usize,
    pub job: usize,
    pub seq: u64,
}

impl Eq for EventKey {}

impl Ord for EventKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.priority.cmp(&other.priority))
            .then(self.machine.cmp(&other.machine))
            .then(self.job.cmp(&other.job))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for EventKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A pending or fired event as recorded in traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub machine: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub job: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<usize>,
    /// Index of an exogenous event in the pre-sampled schedule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exo: Option<usize>,
}

impl Event {
    pub(crate) fn key(&self, time: f64, seq: u64) -> EventKey {
        EventKey {
            time,
            priority: priority(&self.kind),
            machine: self.machine.unwrap_or(usize::MAX),
            job: self.job.unwrap_or(usize::MAX),
            seq,
        }
    }
}

fn needs_horizon(inst: &Instance) -> bool {
    !inst.stochastic.breakdowns.is_empty() || inst.stochastic.demand.is_some()
}

/// Pre-sample every exogenous event of a run. The result depends on
/// `(inst, seed, horizon)` only and is sorted in firing order.
pub fn sample_exogenous(
    inst: &Instance,
    seed: u64,
    horizon: Option<f64>,
) -> Result<Vec<ExogenousEvent>, SimError> {
    let horizon = match horizon {
        Some(h) if h > 0.0 => Some(h),
        _ if needs_horizon(inst) => return Err(SimError::HorizonRequired),
        _ => None,
    };
    let mut raw: Vec<(f64, ExoKind, usize)> = Vec::new();

    // releases
    match &inst.stochastic.release {
        Some(ReleaseProcess::Interarrival(d)) => {
            let mut rng = RngStream::new(seed, RELEASES);
            let mut t = 0.0;
            for j in 0..inst.jobs.len() {
                t += d.sample(&mut rng).max(0.0);
                raw.push((t, ExoKind::JobRelease, j));
            }
        }
        Some(ReleaseProcess::PerJob(ds)) => {
            let mut rng = RngStream::new(seed, RELEASES);
            for (j, d) in ds.iter().enumerate().take(inst.jobs.len()) {
                raw.push((d.sample(&mut rng).max(0.0), ExoKind::JobRelease, j));
            }
        }
        None => {
            for (j, job) in inst.jobs.iter().enumerate() {
                raw.push((job.release, ExoKind::JobRelease, j));
            }
        }
    }

    // breakdowns: alternating up and repair periods per machine
    if let Some(h) = horizon {
        let mut rng = RngStream::new(seed, BREAKDOWNS);
        for b in &inst.stochastic.breakdowns {
            let mut t = 0.0;
            loop {
                t += b.uptime.sample(&mut rng).max(0.0);
                if t >= h {
                    break;
                }
                raw.push((t, ExoKind::BreakdownStart, b.machine));
                // a zero-length repair would not alternate in the queue
                t += b.repair.sample(&mut rng).max(f64::MIN_POSITIVE);
                raw.push((t, ExoKind::BreakdownEnd, b.machine));
            }
        }
    }
    for w in &inst.maintenance {
        raw.push((w.start, ExoKind::BreakdownStart, w.machine));
        raw.push((w.start + w.duration, ExoKind::BreakdownEnd, w.machine));
    }

    // demand
    for (k, &t) in inst.demand.iter().enumerate() {
        raw.push((t, ExoKind::DemandArrival, k));
    }
    if let (Some(d), Some(h)) = (&inst.stochastic.demand, horizon) {
        let mut rng = RngStream::new(seed, DEMAND);
        let mut t = 0.0;
        let mut k = inst.demand.len();
        loop {
            t += d.sample(&mut rng).max(0.0);
            if t >= h {
                break;
            }
            raw.push((t, ExoKind::DemandArrival, k));
            k += 1;
        }
    }

    for (i, m) in inst.machines.iter().enumerate() {
        if m.available_from > 0.0 {
            raw.push((m.available_from, ExoKind::MachineAdded, i));
        }
    }

    let mut keyed: Vec<(EventKey, (f64, ExoKind, usize))> = raw
        .into_iter()
        .enumerate()
        .map(|(idx, (time, kind, payload))| {
            let ev = exo_event(kind, payload, 0);
            (ev.key(time, idx as u64), (time, kind, payload))
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(keyed
        .into_iter()
        .enumerate()
        .map(|(seq, (_, (time, kind, payload)))| ExogenousEvent {
            time,
            kind,
            payload,
            sequence_no: seq as u64,
        })
        .collect())
}

pub(crate) fn exo_event(kind: ExoKind, payload: usize, index: usize) -> Event {
    let (machine, job) = match kind {
        ExoKind::JobRelease => (None, Some(payload)),
        ExoKind::DemandArrival => (None, None),
        _ => (Some(payload), None),
    };
    Event {
        kind: EventKind::Exo(kind),
        machine,
        job,
        vehicle: None,
        exo: Some(index),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, load_orlib, BreakdownProcess, Shape};
    use crate::notation::parse_triplet;
    use crate::rng::Distribution;

    fn breakdown_instance() -> Instance {
        let mut inst = load_orlib("2 2\n0 3 1 2\n1 2 0 4").unwrap();
        inst.triplet = parse_triplet("Jm|brkdwn^s|C_max").unwrap();
        inst.stochastic.breakdowns.push(BreakdownProcess {
            machine: 0,
            uptime: Distribution::Exponential { rate: 0.5 },
            repair: Distribution::Uniform { low: 0.5, high: 1.5 },
        });
        inst
    }

    #[test]
    fn deterministic_instance_only_releases() {
        let inst = load_orlib(crate::instance::FT06).unwrap();
        let ev = sample_exogenous(&inst, 99, None).unwrap();
        assert_eq!(ev.len(), 6);
        assert!(ev.iter().all(|e| e.kind == ExoKind::JobRelease && e.time == 0.0));
        assert_eq!(ev.iter().map(|e| e.payload).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn breakdowns_alternate() {
        let inst = breakdown_instance();
        let ev = sample_exogenous(&inst, 7, Some(100.0)).unwrap();
        let bd: Vec<&ExogenousEvent> = ev.iter().filter(|e| e.kind != ExoKind::JobRelease).collect();
        assert!(bd.len() >= 4);
        for (k, e) in bd.iter().enumerate() {
            let expected = if k % 2 == 0 { ExoKind::BreakdownStart } else { ExoKind::BreakdownEnd };
            assert_eq!(e.kind, expected);
        }
        assert!(bd.windows(2).all(|w| w[0].time < w[1].time));
        assert!(ev.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn seeds_move_failures() {
        let inst = breakdown_instance();
        let first = |seed| {
            sample_exogenous(&inst, seed, Some(100.0))
                .unwrap()
                .into_iter()
                .find(|e| e.kind == ExoKind::BreakdownStart)
                .unwrap()
                .time
        };
        assert_ne!(first(7), first(8));
        assert_eq!(first(7), first(7));
    }

    #[test]
    fn horizon_is_required_for_open_processes() {
        let inst = breakdown_instance();
        assert_eq!(sample_exogenous(&inst, 1, None), Err(SimError::HorizonRequired));
    }

    #[test]
    fn tie_order_follows_kind_priority() {
        let t = parse_triplet("Jm|brkdwn|C_max").unwrap();
        let mut inst = generate_instance(&t, &Shape::new(2, 2, 1, 1, 3), 1).unwrap();
        inst.maintenance[0].start = 0.0;
        let ev = sample_exogenous(&inst, 0, None).unwrap();
        // releases at 0 precede a breakdown starting at 0
        let start = ev
            .iter()
            .position(|e| e.kind == ExoKind::BreakdownStart && e.time == 0.0)
            .unwrap();
        assert!(ev[..start].iter().all(|e| e.kind == ExoKind::JobRelease));
        assert_eq!(ev.iter().map(|e| e.sequence_no).collect::<Vec<_>>(), (0..ev.len() as u64).collect::<Vec<_>>());
    }
}
