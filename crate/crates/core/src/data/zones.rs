use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::record::InterventionRecord;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub zone: u32,
    pub cx: f64,
    pub cy: f64,
}

/// Zones identified by their centroids; ids are `0..len` in any order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonePartition {
    zones: Vec<Zone>,
}

impl ZonePartition {
    pub fn new(zones: Vec<Zone>) -> Result<Self> {
        if zones.is_empty() {
            return Err(Error::arg("zone partition must not be empty"));
        }
        let mut seen = vec![false; zones.len()];
        for z in &zones {
            let slot = seen.get_mut(z.zone as usize).ok_or_else(|| {
                Error::arg(format!("zone id {} outside 0..{}", z.zone, zones.len()))
            })?;
            if std::mem::replace(slot, true) {
                return Err(Error::arg(format!("duplicate zone id {}", z.zone)));
            }
            if !z.cx.is_finite() || !z.cy.is_finite() {
                return Err(Error::arg(format!(
                    "zone {} has a non-finite centroid",
                    z.zone
                )));
            }
        }
        Ok(ZonePartition { zones })
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }
}

/// Id of the nearest centroid; ties go to the lowest id.
pub fn assign_area(x: f64, y: f64, zones: &ZonePartition) -> u32 {
    let mut best: Option<(f64, u32)> = None;
    for z in &zones.zones {
        let d = (x - z.cx).powi(2) + (y - z.cy).powi(2);
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && z.zone < bid),
        };
        if better {
            best = Some((d, z.zone));
        }
    }
    best.expect("partition is non-empty").1
}

/// Fills `area` on every record.
pub fn assign_areas(records: &mut [InterventionRecord], zones: &ZonePartition) {
    for r in records {
        r.area = Some(assign_area(r.x, r.y, zones));
    }
}

/// Lloyd's k-means on record coordinates, seeded with k-means++.
pub fn fit_zones(
    records: &[InterventionRecord],
    k: usize,
    seed: u64,
    iterations: usize,
) -> Result<ZonePartition> {
    if k == 0 {
        return Err(Error::arg("zone count must be at least 1"));
    }
    if records.len() < k {
        return Err(Error::arg(format!(
            "{} records cannot seed {k} zones",
            records.len()
        )));
    }
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.x, r.y)).collect();
    let mut rng = rng::from_seed(seed);
    let dist2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);

    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut nearest: Vec<f64> = points.iter().map(|&p| dist2(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            points[chosen]
        } else {
            points[rng.random_range(0..points.len())]
        };
        centroids.push(next);
        for (d, &p) in nearest.iter_mut().zip(&points) {
            *d = d.min(dist2(p, next));
        }
    }

    let mut labels = vec![0usize; points.len()];
    for _ in 0..iterations {
        let mut changed = false;
        for (label, &p) in labels.iter_mut().zip(&points) {
            let best = (0..k)
                .min_by(|&a, &b| dist2(p, centroids[a]).total_cmp(&dist2(p, centroids[b])))
                .expect("k >= 1");
            changed |= *label != best;
            *label = best;
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (&label, &p) in labels.iter().zip(&points) {
            sums[label].0 += p.0;
            sums[label].1 += p.1;
            sums[label].2 += 1;
        }
        for (c, (sx, sy, n)) in centroids.iter_mut().zip(&sums) {
            if *n > 0 {
                *c = (sx / *n as f64, sy / *n as f64);
            }
        }
        // Re-seed empty clusters at the point farthest from its centroid.
        for (j, s) in sums.iter().enumerate() {
            if s.2 == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        dist2(points[a], centroids[labels[a]])
                            .total_cmp(&dist2(points[b], centroids[labels[b]]))
                    })
                    .expect("points non-empty");
                centroids[j] = points[far];
                labels[far] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    ZonePartition::new(
        centroids
            .into_iter()
            .enumerate()
            .map(|(i, (cx, cy))| Zone {
                zone: i as u32,
                cx,
                cy,
            })
            .collect(),
    )
}

/// Reads a `zone,cx,cy` CSV.
pub fn read_zones<R: Read>(reader: R) -> Result<ZonePartition> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut zones = Vec::new();
    for row in rdr.deserialize() {
        zones.push(row?);
    }
    ZonePartition::new(zones)
}

pub fn write_zones<W: Write>(writer: W, zones: &ZonePartition) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for z in &zones.zones {
        wtr.serialize(z)?;
    }
    wtr.flush().map_err(|e| Error::io("<zone writer>", e))?;
    Ok(())
}
