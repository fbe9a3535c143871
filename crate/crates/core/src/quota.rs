//! Per-area rejection sampling: draw from a generator until every area holds
//! close to its target count, or give up after a fixed number of draws.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::data::{assign_area, InterventionRecord, ZonePartition};
use crate::generator::RecordGenerator;
use crate::{rng, Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 0.02;
pub const DEFAULT_BUDGET_MULTIPLIER: f64 = 3.0;
pub const DEFAULT_BATCH: usize = 4096;

/// How per-area targets are derived from the real data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuotaMode {
    /// Each area keeps its own observed count.
    #[default]
    PerArea,
    /// Every area gets `n / K`; the remainder goes one each to the lowest ids.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotaSpec {
    /// Target per zone id.
    pub targets: Vec<u64>,
    pub tolerance: f64,
    pub budget_multiplier: f64,
}

impl QuotaSpec {
    pub fn new(targets: Vec<u64>, tolerance: f64, budget_multiplier: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&tolerance) {
            return Err(Error::arg(format!("tolerance {tolerance} outside [0, 1)")));
        }
        if !(budget_multiplier >= 1.0 && budget_multiplier.is_finite()) {
            return Err(Error::arg(format!(
                "budget multiplier {budget_multiplier} below 1"
            )));
        }
        Ok(QuotaSpec {
            targets,
            tolerance,
            budget_multiplier,
        })
    }

    /// Total required rows, the sum of all targets.
    pub fn required(&self) -> u64 {
        self.targets.iter().sum()
    }

    /// Maximum number of draws, `floor(B * n)`.
    pub fn budget(&self) -> u64 {
        (self.budget_multiplier * self.required() as f64 + 1e-9).floor() as u64
    }

    /// Smallest accepted count that satisfies area `a`: `ceil((1 - tau) t_a)`.
    pub fn floor(&self, area: usize) -> u64 {
        let t = self.targets[area];
        // ceil(t - tau t) == t - floor(tau t) for integer t; the epsilon keeps
        // products like 0.02 * 50 from landing just below an integer.
        t - (self.tolerance * t as f64 + 1e-9).floor() as u64
    }

    pub fn is_satisfied(&self, accepted: &[u64]) -> bool {
        (0..self.targets.len()).all(|a| accepted[a] >= self.floor(a))
    }
}

/// Targets from the areas of `real` under `zones`.
pub fn build_quota(
    real: &[InterventionRecord],
    zones: &ZonePartition,
    mode: QuotaMode,
    tolerance: f64,
    budget_multiplier: f64,
) -> Result<QuotaSpec> {
    if real.is_empty() {
        return Err(Error::arg("cannot build a quota from an empty dataset"));
    }
    let k = zones.len();
    let targets = match mode {
        QuotaMode::PerArea => {
            let mut counts = vec![0u64; k];
            for r in real {
                counts[assign_area(r.x, r.y, zones) as usize] += 1;
            }
            counts
        }
        QuotaMode::Uniform => {
            let n = real.len() as u64;
            let (base, extra) = (n / k as u64, n % k as u64);
            (0..k as u64).map(|a| base + u64::from(a < extra)).collect()
        }
    };
    QuotaSpec::new(targets, tolerance, budget_multiplier)
}

/// Reads a `zone,target` CSV. Zones not listed get target 0.
pub fn read_targets<R: Read>(reader: R, zone_count: usize) -> Result<Vec<u64>> {
    #[derive(Deserialize)]
    struct Row {
        zone: u32,
        target: u64,
    }
    let mut targets = vec![None; zone_count];
    for (i, row) in csv::Reader::from_reader(reader)
        .deserialize::<Row>()
        .enumerate()
    {
        let row = row?;
        let slot = targets
            .get_mut(row.zone as usize)
            .ok_or_else(|| Error::Validation {
                row: i + 1,
                message: format!("zone {} not in a {zone_count}-zone partition", row.zone),
            })?;
        if slot.replace(row.target).is_some() {
            return Err(Error::Validation {
                row: i + 1,
                message: format!("zone {} listed twice", row.zone),
            });
        }
    }
    Ok(targets.into_iter().map(|t| t.unwrap_or(0)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuotaStatus {
    Success,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuotaResult {
    /// Accepted records in draw order, areas assigned.
    pub accepted: Vec<InterventionRecord>,
    pub draws: u64,
    pub per_area: Vec<u64>,
    pub status: QuotaStatus,
    pub discarded: u64,
}

/// Everything in a [`QuotaResult`] except the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotaSummary {
    pub status: QuotaStatus,
    pub draws: u64,
    pub accepted: u64,
    pub discarded: u64,
    pub required: u64,
    pub budget: u64,
    pub targets: Vec<u64>,
    pub per_area: Vec<u64>,
}

impl QuotaResult {
    pub fn summary(&self, quota: &QuotaSpec) -> QuotaSummary {
        QuotaSummary {
            status: self.status,
            draws: self.draws,
            accepted: self.accepted.len() as u64,
            discarded: self.discarded,
            required: quota.required(),
            budget: quota.budget(),
            targets: quota.targets.clone(),
            per_area: self.per_area.clone(),
        }
    }
}

/// Requests batches of `batch_size` records, batch `i` with seed
/// `derive(seed, i)`, and accepts each record whose area is still below its
/// target. Stops at the first record that completes the quota or exhausts the
/// budget.
pub fn oversample<G: RecordGenerator + ?Sized>(
    generator: &mut G,
    quota: &QuotaSpec,
    zones: &ZonePartition,
    batch_size: usize,
    seed: u64,
) -> Result<QuotaResult> {
    if batch_size == 0 {
        return Err(Error::arg("batch size must be positive"));
    }
    if quota.targets.len() != zones.len() {
        return Err(Error::Shape {
            context: "quota targets per zone",
            expected: zones.len(),
            found: quota.targets.len(),
        });
    }
    let budget = quota.budget();
    let mut per_area = vec![0u64; zones.len()];
    let mut accepted = Vec::with_capacity(quota.required() as usize);
    let mut draws = 0u64;
    let mut batch_index = 0u64;
    let mut status = if quota.is_satisfied(&per_area) {
        Some(QuotaStatus::Success)
    } else {
        None
    };
    if status.is_none() && budget == 0 {
        status = Some(QuotaStatus::BudgetExhausted);
    }

    while status.is_none() {
        let batch = generator
            .generate(batch_size, rng::derive(seed, batch_index))
            .and_then(|b| {
                if b.is_empty() {
                    Err(Error::arg("generator returned an empty batch"))
                } else {
                    Ok(b)
                }
            })
            .map_err(|e| Error::Generator {
                draws,
                source: Box::new(e),
            })?;
        batch_index += 1;
        for mut record in batch {
            draws += 1;
            let area = assign_area(record.x, record.y, zones) as usize;
            if per_area[area] < quota.targets[area] {
                record.area = Some(area as u32);
                per_area[area] += 1;
                accepted.push(record);
                if quota.is_satisfied(&per_area) {
                    status = Some(QuotaStatus::Success);
                    break;
                }
            }
            if draws == budget {
                status = Some(QuotaStatus::BudgetExhausted);
                break;
            }
        }
    }

    Ok(QuotaResult {
        discarded: draws - accepted.len() as u64,
        accepted,
        draws,
        per_area,
        status: status.expect("loop ends with a status"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::shuffle_sample;
    use crate::data::Zone;

    fn zones(k: u32) -> ZonePartition {
        ZonePartition::new(
            (0..k)
                .map(|z| Zone {
                    zone: z,
                    cx: 10.0 * z as f64,
                    cy: 0.0,
                })
                .collect(),
        )
        .unwrap()
    }

    fn at(x: f64) -> InterventionRecord {
        InterventionRecord {
            x,
            y: 0.0,
            month: 1,
            day: 0,
            hour: 0,
            duration: 11,
            incident: 1,
            area: None,
        }
    }

    #[test]
    fn counting_and_budget() {
        let real: Vec<_> = (0..30).map(|i| at(10.0 * (i % 3) as f64)).collect();
        let q = build_quota(&real, &zones(3), QuotaMode::PerArea, 0.02, 3.0).unwrap();
        assert_eq!(q.targets, vec![10, 10, 10]);
        assert_eq!(q.required(), 30);
        assert_eq!(q.budget(), 90);
        assert_eq!(q.floor(0), 10);

        let big = QuotaSpec::new(vec![53_467], 0.02, 3.0).unwrap();
        assert_eq!(big.budget(), 160_401);
        assert_eq!(big.floor(0), 52_398);

        let q = QuotaSpec::new(vec![50, 100, 7, 0], 0.02, 3.0).unwrap();
        assert_eq!(
            (q.floor(0), q.floor(1), q.floor(2), q.floor(3)),
            (49, 98, 7, 0)
        );

        assert!(build_quota(&[], &zones(2), QuotaMode::PerArea, 0.02, 3.0).is_err());
        assert!(QuotaSpec::new(vec![1], 1.0, 3.0).is_err());
        assert!(QuotaSpec::new(vec![1], 0.0, 0.5).is_err());
    }

    #[test]
    fn uniform_mode_spreads_remainder() {
        let real: Vec<_> = (0..11).map(|_| at(0.0)).collect();
        let q = build_quota(&real, &zones(3), QuotaMode::Uniform, 0.02, 3.0).unwrap();
        assert_eq!(q.targets, vec![4, 4, 3]);
    }

    #[test]
    fn target_file() {
        let t = read_targets("zone,target\n2,5\n0,7\n".as_bytes(), 3).unwrap();
        assert_eq!(t, vec![7, 0, 5]);
        assert!(read_targets("zone,target\n3,5\n".as_bytes(), 3).is_err());
        assert!(read_targets("zone,target\n1,5\n1,6\n".as_bytes(), 3).is_err());
        assert!(read_targets("zone,target\n1,x\n".as_bytes(), 3).is_err());
    }

    #[test]
    fn perfect_generator_single_area() {
        let q = QuotaSpec::new(vec![25], 0.0, 3.0).unwrap();
        let mut g = |n: usize, _seed: u64| Ok(vec![at(0.0); n]);
        let r = oversample(&mut g, &q, &zones(1), 8, 0).unwrap();
        assert_eq!(r.status, QuotaStatus::Success);
        assert_eq!(r.draws, 25);
        assert_eq!(r.discarded, 0);
        assert!(r.accepted.iter().all(|a| a.area == Some(0)));
    }

    #[test]
    fn censored_generator_exhausts_budget() {
        let q = QuotaSpec::new(vec![4, 6], 0.02, 3.0).unwrap();
        let mut g = |n: usize, _seed: u64| Ok(vec![at(10.0); n]);
        let r = oversample(&mut g, &q, &zones(2), 7, 0).unwrap();
        assert_eq!(r.status, QuotaStatus::BudgetExhausted);
        assert_eq!(r.draws, 30);
        assert_eq!(r.per_area, vec![0, 6]);
        assert_eq!(r.discarded, 24);
    }

    #[test]
    fn generator_failures_carry_draw_count() {
        let q = QuotaSpec::new(vec![10, 10], 0.0, 3.0).unwrap();
        let mut calls = 0;
        let mut g = |n: usize, _seed: u64| {
            calls += 1;
            if calls > 1 {
                Err(Error::arg("boom"))
            } else {
                Ok(vec![at(0.0); n])
            }
        };
        match oversample(&mut g, &q, &zones(2), 4, 0) {
            Err(Error::Generator { draws, .. }) => assert_eq!(draws, 4),
            other => panic!("unexpected {other:?}"),
        }
        let mut empty = |_: usize, _: u64| Ok(vec![]);
        assert!(matches!(
            oversample(&mut empty, &q, &zones(2), 4, 0),
            Err(Error::Generator { draws: 0, .. })
        ));
    }

    #[test]
    fn shuffle_meets_quota_deterministically_and_monotone_in_budget() {
        let real: Vec<_> = (0..300).map(|i| at(10.0 * ((i * i) % 4) as f64)).collect();
        let z = zones(4);
        let q = build_quota(&real, &z, QuotaMode::PerArea, 0.02, 3.0).unwrap();
        let mut g = |n: usize, seed: u64| shuffle_sample(&real, n, seed);
        let a = oversample(&mut g, &q, &z, 64, 9).unwrap();
        let b = oversample(&mut g, &q, &z, 64, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.status, QuotaStatus::Success);
        for (area, &t) in q.targets.iter().enumerate() {
            assert!(a.per_area[area] <= t && a.per_area[area] >= q.floor(area));
        }
        assert_eq!(a.discarded, a.draws - a.accepted.len() as u64);

        // a tight budget may fail; loosening it with the same seeds cannot turn success into failure
        let mut outcomes = Vec::new();
        for b in [1.0, 1.1, 1.5, 2.0, 3.0] {
            let q = QuotaSpec::new(q.targets.clone(), 0.02, b).unwrap();
            outcomes.push(oversample(&mut g, &q, &z, 64, 9).unwrap().status);
        }
        let first_success = outcomes
            .iter()
            .position(|s| *s == QuotaStatus::Success)
            .unwrap();
        assert!(outcomes[first_success..]
            .iter()
            .all(|s| *s == QuotaStatus::Success));
    }
}
