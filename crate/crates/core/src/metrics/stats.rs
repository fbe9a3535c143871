use serde::{Deserialize, Serialize};

use crate::data::{Column, InterventionRecord};
use crate::{Error, Result};

/// Population statistics of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalStats {
    pub column: Column,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn column_stats(column: Column, values: &[f64]) -> Result<MarginalStats> {
    if values.is_empty() {
        return Err(Error::arg("statistics of an empty column"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(MarginalStats {
        column,
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// One entry per column, in canonical order; `incident` on its codes.
pub fn marginal_stats(records: &[InterventionRecord]) -> Result<Vec<MarginalStats>> {
    if records.is_empty() {
        return Err(Error::arg("statistics of an empty dataset"));
    }
    Column::ALL
        .into_iter()
        .map(|c| column_stats(c, &records.iter().map(|r| r.value(c)).collect::<Vec<_>>()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_formulas() {
        let s = column_stats(Column::Hour, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!((s.min, s.max), (1.0, 3.0));

        let c = column_stats(Column::Duration, &[42.0; 5]).unwrap();
        assert_eq!((c.mean, c.std, c.min, c.max), (42.0, 0.0, 42.0, 42.0));
        assert!(column_stats(Column::X, &[]).is_err());
    }

    #[test]
    fn per_column_order() {
        let r = InterventionRecord {
            x: 1.0,
            y: 2.0,
            month: 3,
            day: 70,
            hour: 5,
            duration: 60,
            incident: 7,
            area: None,
        };
        let s = marginal_stats(&[r]).unwrap();
        assert_eq!(
            s.iter().map(|m| m.column).collect::<Vec<_>>(),
            Column::ALL.to_vec()
        );
        assert_eq!(s[6].mean, 7.0);
        assert!(marginal_stats(&[]).is_err());
    }
}
