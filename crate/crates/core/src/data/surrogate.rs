//! Synthetic stand-in for the real intervention log.
//!
//! Shapes chosen to exercise the same difficulties: a dense metropolitan
//! cluster over a diffuse background, heavy-tailed durations, an imbalanced
//! incident mix, and two incident types tied to a season.

use rand::distr::weighted::WeightedIndex;
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};

use super::record::InterventionRecord;
use super::MONTH_START_DAY;
use crate::{rng, Error, Result};

/// Relative frequency of incident codes 1..=12.
pub const INCIDENT_CATEGORIES: [f64; 12] = [
    0.28, 0.17, 0.12, 0.10, 0.08, 0.06, 0.05, 0.04, 0.04, 0.03, 0.02, 0.01,
];
/// Chimney-fire analogue: nine in ten rows fall in [`WINTER_MONTHS`].
pub const WINTER_INCIDENT: u32 = 4;
pub const WINTER_MONTHS: [u8; 4] = [11, 12, 1, 2];
/// Wildfire analogue: concentrated in [`SUMMER_MONTHS`].
pub const SUMMER_INCIDENT: u32 = 5;
pub const SUMMER_MONTHS: [u8; 4] = [6, 7, 8, 9];

const X_RANGE: (f64, f64) = (492_349.0, 624_065.0);
const Y_RANGE: (f64, f64) = (6_183_028.0, 6_312_665.0);
const METRO: (f64, f64) = (574_000.0, 6_279_000.0);
const TOWNS: [(f64, f64); 3] = [
    (523_000.0, 6_226_000.0),
    (603_000.0, 6_241_000.0),
    (551_000.0, 6_296_000.0),
];
const MONTH_WEIGHTS: [f64; 12] = [
    0.9, 0.85, 0.9, 0.95, 1.0, 1.05, 1.2, 1.15, 1.0, 0.95, 0.95, 1.0,
];

/// `n` deterministic surrogate records for `seed`.
pub fn surrogate_dataset(seed: u64, n: usize) -> Result<Vec<InterventionRecord>> {
    if n == 0 {
        return Err(Error::arg("surrogate size must be at least 1"));
    }
    let mut rng = rng::from_seed(seed);
    let incidents = WeightedIndex::new(INCIDENT_CATEGORIES).expect("static weights");
    let months = WeightedIndex::new(MONTH_WEIGHTS).expect("static weights");
    let metro = (
        Normal::new(METRO.0, 6_000.0).unwrap(),
        Normal::new(METRO.1, 5_000.0).unwrap(),
    );
    let town_noise = Normal::new(0.0, 3_500.0).unwrap();
    let short = LogNormal::new(70f64.ln(), 0.5).unwrap();
    let long = LogNormal::new(200f64.ln(), 0.7).unwrap();
    let daytime: Normal<f64> = Normal::new(14.0, 4.5).unwrap();
    let mut winter_seen = 0usize;

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let incident = incidents.sample(&mut rng) as u32 + 1;

        let month = if incident == WINTER_INCIDENT {
            winter_seen += 1;
            if winter_seen.is_multiple_of(10) {
                rng.random_range(3..=10)
            } else {
                WINTER_MONTHS[rng.random_range(0..WINTER_MONTHS.len())]
            }
        } else if incident == SUMMER_INCIDENT && rng.random::<f64>() < 0.85 {
            SUMMER_MONTHS[rng.random_range(0..SUMMER_MONTHS.len())]
        } else {
            months.sample(&mut rng) as u8 + 1
        };
        let first = MONTH_START_DAY[month as usize - 1];
        let last = MONTH_START_DAY[month as usize];
        let day = rng.random_range(first..last);

        let hour = if rng.random::<f64>() < 0.8 {
            daytime.sample(&mut rng).round().rem_euclid(24.0) as u8
        } else {
            rng.random_range(0..24)
        };

        let (x, y) = loop {
            let u: f64 = rng.random();
            let (x, y) = if u < 0.55 {
                (metro.0.sample(&mut rng), metro.1.sample(&mut rng))
            } else if u < 0.75 {
                let (tx, ty) = TOWNS[rng.random_range(0..TOWNS.len())];
                (
                    tx + town_noise.sample(&mut rng),
                    ty + town_noise.sample(&mut rng),
                )
            } else {
                (
                    rng.random_range(X_RANGE.0..=X_RANGE.1),
                    rng.random_range(Y_RANGE.0..=Y_RANGE.1),
                )
            };
            if (X_RANGE.0..=X_RANGE.1).contains(&x) && (Y_RANGE.0..=Y_RANGE.1).contains(&y) {
                break ((x * 10.0).round() / 10.0, (y * 10.0).round() / 10.0);
            }
        };

        // wildfires and long tail run longer
        let raw = if incident == SUMMER_INCIDENT || rng.random::<f64>() < 0.1 {
            long.sample(&mut rng)
        } else {
            short.sample(&mut rng)
        };
        let duration = raw.round().clamp(11.0, 1184.0) as u32;

        out.push(InterventionRecord {
            x,
            y,
            month,
            day,
            hour,
            duration,
            incident,
            area: None,
        });
    }
    Ok(out)
}
