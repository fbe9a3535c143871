use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Resources;
use crate::data::{month_of_day, InterventionRecord};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimConfig {
    /// Straight-line speed in metres per minute. When set, each vehicle is
    /// also busy for the round trip between its station and the scene.
    pub travel_speed: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Start,
    Return,
}

/// State after one event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: EventKind,
    pub intervention: usize,
    pub busy: u64,
    pub dispatched: u64,
    pub returned: u64,
}

/// Busy vehicles seen as an intervention starts, before it is served.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcurrencySample {
    pub intervention: usize,
    pub time: f64,
    pub busy: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnmetDemand {
    pub intervention: usize,
    pub vehicle_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub fleet_size: u64,
    /// In start order.
    pub concurrency: Vec<ConcurrencySample>,
    pub concurrency_mean: f64,
    /// Population standard deviation.
    pub concurrency_std: f64,
    pub totals: BTreeMap<String, u64>,
    pub unmet: Vec<UnmetDemand>,
    /// Records whose month disagrees with their day of year.
    pub month_mismatches: u64,
    /// Interventions per incident code with no dispatch rule.
    pub unruled: BTreeMap<u32, u64>,
    pub trace: Vec<TraceEvent>,
}

/// Minutes since the start of the year: `day * 1440 + hour * 60 + u`, with `u`
/// a uniform whole minute in `0..60` drawn per record in input order.
pub fn start_times(records: &[InterventionRecord], seed: u64) -> Vec<f64> {
    let mut rng = rng::from_seed(seed);
    records
        .iter()
        .map(|r| (r.day as u32 * 1440 + r.hour as u32 * 60 + rng.random_range(0..60u32)) as f64)
        .collect()
}

pub fn simulate(
    records: &[InterventionRecord],
    resources: &Resources,
    config: &SimConfig,
) -> Result<SimReport> {
    simulate_with_starts(
        records,
        &start_times(records, config.seed),
        resources,
        config,
    )
}

#[derive(Debug, PartialEq)]
struct Release {
    time: f64,
    intervention: usize,
    order: usize,
    station: usize,
    vehicle_type: String,
}

impl Eq for Release {}

impl Ord for Release {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.intervention.cmp(&other.intervention))
            .then(self.order.cmp(&other.order))
    }
}

impl PartialOrd for Release {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Replays `records` starting at the given absolute minutes. Returns due at a
/// start time are processed before that start; simultaneous starts go in
/// input order.
pub fn simulate_with_starts(
    records: &[InterventionRecord],
    starts: &[f64],
    resources: &Resources,
    config: &SimConfig,
) -> Result<SimReport> {
    if records.is_empty() {
        return Err(Error::arg("nothing to simulate"));
    }
    if starts.len() != records.len() {
        return Err(Error::Shape {
            context: "start times",
            expected: records.len(),
            found: starts.len(),
        });
    }
    if let Some(t) = starts.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(Error::arg(format!(
            "start time {t} is not a nonnegative minute"
        )));
    }
    if let Some(v) = config.travel_speed.filter(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::arg(format!(
            "travel speed must be positive, got {v}"
        )));
    }

    let stations = &resources.stations;
    let mut available: Vec<BTreeMap<String, u32>> =
        stations.iter().map(|s| s.fleet.clone()).collect();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| starts[a].total_cmp(&starts[b]).then(a.cmp(&b)));

    let mut pending: BinaryHeap<Reverse<Release>> = BinaryHeap::new();
    let (mut busy, mut dispatched, mut returned) = (0u64, 0u64, 0u64);
    let mut concurrency = Vec::with_capacity(records.len());
    let mut totals: BTreeMap<String, u64> = resources
        .vehicle_types()
        .into_iter()
        .map(|k| (k, 0))
        .collect();
    let mut unmet = Vec::new();
    let mut unruled: BTreeMap<u32, u64> = BTreeMap::new();
    let mut trace = Vec::with_capacity(records.len() * 3);

    let release = |r: Release,
                   available: &mut Vec<BTreeMap<String, u32>>,
                   busy: &mut u64,
                   returned: &mut u64,
                   dispatched: u64,
                   trace: &mut Vec<TraceEvent>| {
        *available[r.station]
            .get_mut(&r.vehicle_type)
            .expect("type came from this station") += 1;
        *busy -= 1;
        *returned += 1;
        trace.push(TraceEvent {
            time: r.time,
            kind: EventKind::Return,
            intervention: r.intervention,
            busy: *busy,
            dispatched,
            returned: *returned,
        });
    };

    for &i in &order {
        let now = starts[i];
        while pending.peek().is_some_and(|Reverse(r)| r.time <= now) {
            let Reverse(r) = pending.pop().expect("peeked");
            release(
                r,
                &mut available,
                &mut busy,
                &mut returned,
                dispatched,
                &mut trace,
            );
        }
        concurrency.push(ConcurrencySample {
            intervention: i,
            time: now,
            busy,
        });

        let record = &records[i];
        let Some(needs) = resources.rules.required(record.incident) else {
            *unruled.entry(record.incident).or_insert(0) += 1;
            trace.push(TraceEvent {
                time: now,
                kind: EventKind::Start,
                intervention: i,
                busy,
                dispatched,
                returned,
            });
            continue;
        };
        let mut by_distance: Vec<(f64, usize)> = stations
            .iter()
            .enumerate()
            .map(|(s, st)| ((st.x - record.x).powi(2) + (st.y - record.y).powi(2), s))
            .collect();
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut assignment = 0usize;
        for (kind, quantity) in needs {
            for _ in 0..*quantity {
                let found = by_distance
                    .iter()
                    .find(|(_, s)| available[*s].get(kind).is_some_and(|&c| c > 0));
                match found {
                    Some(&(d2, s)) => {
                        *available[s].get_mut(kind).expect("checked") -= 1;
                        busy += 1;
                        dispatched += 1;
                        *totals.get_mut(kind).expect("validated type") += 1;
                        let travel = config.travel_speed.map_or(0.0, |v| 2.0 * d2.sqrt() / v);
                        pending.push(Reverse(Release {
                            time: now + record.duration as f64 + travel,
                            intervention: i,
                            order: assignment,
                            station: s,
                            vehicle_type: kind.clone(),
                        }));
                        assignment += 1;
                    }
                    None => unmet.push(UnmetDemand {
                        intervention: i,
                        vehicle_type: kind.clone(),
                    }),
                }
            }
        }
        trace.push(TraceEvent {
            time: now,
            kind: EventKind::Start,
            intervention: i,
            busy,
            dispatched,
            returned,
        });
    }
    while let Some(Reverse(r)) = pending.pop() {
        release(
            r,
            &mut available,
            &mut busy,
            &mut returned,
            dispatched,
            &mut trace,
        );
    }

    let n = concurrency.len() as f64;
    let mean = concurrency.iter().map(|c| c.busy as f64).sum::<f64>() / n;
    let var = concurrency
        .iter()
        .map(|c| (c.busy as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    Ok(SimReport {
        fleet_size: resources.fleet_size(),
        concurrency,
        concurrency_mean: mean,
        concurrency_std: var.sqrt(),
        totals,
        unmet,
        month_mismatches: records
            .iter()
            .filter(|r| month_of_day(r.day) != r.month)
            .count() as u64,
        unruled,
        trace,
    })
}
