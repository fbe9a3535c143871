use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::SimReport;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub quantity: String,
    pub a: f64,
    pub b: f64,
    /// `b - a`.
    pub delta: f64,
    pub abs_delta: f64,
    /// `100 |b - a| / a`; absent when `a` is 0.
    pub relative_percent: Option<f64>,
}

impl ComparisonRow {
    fn new(quantity: String, a: f64, b: f64) -> Self {
        ComparisonRow {
            quantity,
            a,
            b,
            delta: b - a,
            abs_delta: (b - a).abs(),
            relative_percent: (a != 0.0).then(|| 100.0 * (b - a).abs() / a),
        }
    }
}

/// Per-type totals first (one row per type in either report, a missing type
/// counting 0), then concurrency mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_reports(a: &SimReport, b: &SimReport) -> Result<Comparison> {
    let ka: BTreeSet<&String> = a.totals.keys().collect();
    let kb: BTreeSet<&String> = b.totals.keys().collect();
    if ka.is_disjoint(&kb) {
        return Err(Error::arg("reports share no vehicle type"));
    }
    let mut rows: Vec<ComparisonRow> = ka
        .union(&kb)
        .map(|k| {
            let get = |r: &SimReport| *r.totals.get(*k).unwrap_or(&0) as f64;
            ComparisonRow::new(format!("total:{k}"), get(a), get(b))
        })
        .collect();
    rows.push(ComparisonRow::new(
        "concurrency_mean".into(),
        a.concurrency_mean,
        b.concurrency_mean,
    ));
    rows.push(ComparisonRow::new(
        "concurrency_std".into(),
        a.concurrency_std,
        b.concurrency_std,
    ));
    Ok(Comparison { rows })
}

impl Comparison {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "quantity",
            "a",
            "b",
            "delta",
            "abs_delta",
            "relative_percent",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.quantity.clone(),
                r.a.to_string(),
                r.b.to_string(),
                r.delta.to_string(),
                r.abs_delta.to_string(),
                r.relative_percent
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<comparison csv>", e))?;
        Ok(())
    }
}
