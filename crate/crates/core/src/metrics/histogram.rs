use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::InterventionRecord;
use crate::{Error, Result};

/// Width of a duration bin, in minutes.
pub const DURATION_BIN: u32 = 10;

/// Discretisations used by the histogram metrics and figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinnedFeature {
    Month,
    /// Day of year.
    Day,
    /// `day mod 7`.
    Weekday,
    Hour,
    /// 10-minute bins, labelled by their lower edge divided by 10.
    Duration,
    Incident,
    Area,
}

impl BinnedFeature {
    pub const ALL: [BinnedFeature; 7] = [
        BinnedFeature::Month,
        BinnedFeature::Day,
        BinnedFeature::Weekday,
        BinnedFeature::Hour,
        BinnedFeature::Duration,
        BinnedFeature::Incident,
        BinnedFeature::Area,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinnedFeature::Month => "month",
            BinnedFeature::Day => "day",
            BinnedFeature::Weekday => "weekday",
            BinnedFeature::Hour => "hour",
            BinnedFeature::Duration => "duration",
            BinnedFeature::Incident => "incident",
            BinnedFeature::Area => "area",
        }
    }

    /// Bin of a record; `None` only for `Area` on a record without one.
    pub fn bin(self, r: &InterventionRecord) -> Option<i64> {
        Some(match self {
            BinnedFeature::Month => r.month as i64,
            BinnedFeature::Day => r.day as i64,
            BinnedFeature::Weekday => (r.day % 7) as i64,
            BinnedFeature::Hour => r.hour as i64,
            BinnedFeature::Duration => (r.duration / DURATION_BIN) as i64,
            BinnedFeature::Incident => r.incident as i64,
            BinnedFeature::Area => return r.area.map(|a| a as i64),
        })
    }
}

impl std::fmt::Display for BinnedFeature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sparse bin counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: BTreeMap<i64, u64>,
}

impl Histogram {
    pub fn of(records: &[InterventionRecord], feature: BinnedFeature) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (row, r) in records.iter().enumerate() {
            let bin = feature.bin(r).ok_or_else(|| Error::Validation {
                row: row + 1,
                message: format!("record has no {feature}"),
            })?;
            *counts.entry(bin).or_insert(0) += 1;
        }
        Ok(Histogram { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Both histograms as dense vectors over the union of their bins.
    pub fn aligned(&self, other: &Histogram) -> (Vec<i64>, Vec<f64>, Vec<f64>) {
        let bins: Vec<i64> = self
            .counts
            .keys()
            .chain(other.counts.keys())
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let get = |h: &Histogram| {
            bins.iter()
                .map(|b| *h.counts.get(b).unwrap_or(&0) as f64)
                .collect()
        };
        let (a, b) = (get(self), get(other));
        (bins, a, b)
    }

    /// Bins sorted by descending count, ties by ascending bin.
    pub fn sorted_descending(&self) -> Vec<(i64, u64)> {
        let mut v: Vec<(i64, u64)> = self.counts.iter().map(|(&b, &c)| (b, c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

fn check_counts(real: &[f64], fake: &[f64]) -> Result<()> {
    if real.len() != fake.len() {
        return Err(Error::arg(format!(
            "bin mismatch: {} real bins vs {} fake bins",
            real.len(),
            fake.len()
        )));
    }
    if real.iter().chain(fake).any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::arg("bin counts must be finite and nonnegative"));
    }
    Ok(())
}

/// Jensen-Shannon divergence in bits between two normalised histograms,
/// times 100.
pub fn jsd_percent(real: &[f64], fake: &[f64]) -> Result<f64> {
    check_counts(real, fake)?;
    let (tr, tf): (f64, f64) = (real.iter().sum(), fake.iter().sum());
    if tr <= 0.0 || tf <= 0.0 {
        return Err(Error::arg("jsd needs positive totals on both sides"));
    }
    let kl_to_mid = |p: f64, q: f64| {
        let m = 0.5 * (p + q);
        if p > 0.0 {
            p * (p / m).log2()
        } else {
            0.0
        }
    };
    let mut js = 0.0;
    for (r, f) in real.iter().zip(fake) {
        let (p, q) = (r / tr, f / tf);
        js += 0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p);
    }
    Ok((100.0 * js).clamp(0.0, 100.0))
}

/// `(min, max)` over bins with nonzero real count of `100 |fake - real| / real`.
pub fn variation_percent(real: &[f64], fake: &[f64]) -> Result<(f64, f64)> {
    check_counts(real, fake)?;
    let v: Vec<f64> = real
        .iter()
        .zip(fake)
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, f)| 100.0 * (f - r).abs() / r)
        .collect();
    if v.is_empty() {
        return Err(Error::arg("variation needs at least one nonzero real bin"));
    }
    Ok((
        v.iter().copied().fold(f64::INFINITY, f64::min),
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ))
}

/// Joint counts of two binned features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrix {
    pub row_feature: BinnedFeature,
    pub col_feature: BinnedFeature,
    pub rows: Vec<i64>,
    pub cols: Vec<i64>,
    /// `counts[i][j]` for `rows[i]`, `cols[j]`.
    pub counts: Vec<Vec<u64>>,
}

impl CountMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, row: i64, col: i64) -> u64 {
        match (self.rows.binary_search(&row), self.cols.binary_search(&col)) {
            (Ok(i), Ok(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

pub fn cooccurrence(
    records: &[InterventionRecord],
    row: BinnedFeature,
    col: BinnedFeature,
) -> Result<CountMatrix> {
    let mut cells: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let (Some(a), Some(b)) = (row.bin(r), col.bin(r)) else {
            return Err(Error::Validation {
                row: i + 1,
                message: format!(
                    "record has no {}",
                    if row.bin(r).is_none() { row } else { col }
                ),
            });
        };
        *cells.entry((a, b)).or_insert(0) += 1;
    }
    let rows: Vec<i64> = cells
        .keys()
        .map(|k| k.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cols: Vec<i64> = cells
        .keys()
        .map(|k| k.1)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut counts = vec![vec![0; cols.len()]; rows.len()];
    for ((a, b), c) in cells {
        let i = rows.binary_search(&a).expect("row label");
        let j = cols.binary_search(&b).expect("col label");
        counts[i][j] = c;
    }
    Ok(CountMatrix {
        row_feature: row,
        col_feature: col,
        rows,
        cols,
        counts,
    })
}

/// Cosine similarity of two count matrices flattened over the union of their
/// labels. Zero when either matrix is empty.
pub fn cosine_similarity(a: &CountMatrix, b: &CountMatrix) -> f64 {
    let rows: BTreeSet<i64> = a.rows.iter().chain(&b.rows).copied().collect();
    let cols: BTreeSet<i64> = a.cols.iter().chain(&b.cols).copied().collect();
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for &r in &rows {
        for &c in &cols {
            let (x, y) = (a.get(r, c) as f64, b.get(r, c) as f64);
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}
