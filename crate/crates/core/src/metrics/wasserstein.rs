use crate::data::{Column, InterventionRecord};
use crate::{Error, Result};

/// Exact 1-D Wasserstein-1 distance between two empirical distributions,
/// computed as the integral of `|F_a - F_b|` over the merged support.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("wasserstein needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::arg("wasserstein samples must be finite"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] <= next {
            i += 1;
        }
        while j < b.len() && b[j] <= next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// Columns entering the aggregate distance.
pub fn wasserstein_columns(include_categorical: bool) -> Vec<Column> {
    Column::ALL
        .into_iter()
        .filter(|c| include_categorical || *c != Column::Incident)
        .collect()
}

/// Per-column W1 after min-max scaling both sides with the real column's
/// range. A zero-range column contributes 0.
pub fn wasserstein_features(
    real: &[InterventionRecord],
    fake: &[InterventionRecord],
    include_categorical: bool,
) -> Result<Vec<(Column, f64)>> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::arg("wasserstein needs two nonempty datasets"));
    }
    wasserstein_columns(include_categorical)
        .into_iter()
        .map(|column| {
            let a: Vec<f64> = real.iter().map(|r| r.value(column)).collect();
            let b: Vec<f64> = fake.iter().map(|r| r.value(column)).collect();
            let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let range = hi - lo;
            let w = if range > 0.0 {
                wasserstein_1d(&a, &b)? / range
            } else {
                0.0
            };
            Ok((column, w))
        })
        .collect()
}

/// Mean of [`wasserstein_features`].
pub fn wasserstein_aggregate(
    real: &[InterventionRecord],
    fake: &[InterventionRecord],
    include_categorical: bool,
) -> Result<f64> {
    let per = wasserstein_features(real, fake, include_categorical)?;
    Ok(per.iter().map(|(_, w)| w).sum::<f64>() / per.len() as f64)
}
