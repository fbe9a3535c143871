use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::subsample;
use crate::{rng, Error, Result};

const STREAM_REAL: u64 = 1;
const STREAM_FAKE: u64 = 2;
const STREAM_MEDIAN: u64 = 3;
const STREAM_PERMUTATION: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    /// Fixed RBF bandwidth; the median heuristic is used when absent.
    pub bandwidth: Option<f64>,
    /// Rows kept per side before estimating.
    pub cap: usize,
    /// Pooled rows used for the median heuristic.
    pub median_cap: usize,
    pub seed: u64,
}

impl Default for MmdConfig {
    fn default() -> Self {
        MmdConfig {
            bandwidth: None,
            cap: 5000,
            median_cap: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdEstimate {
    /// Unbiased estimate of squared MMD; can be slightly negative.
    pub value: f64,
    pub bandwidth: f64,
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel(d2: f64, bandwidth: f64) -> f64 {
    (-d2 / (2.0 * bandwidth * bandwidth)).exp()
}

/// Median pairwise Euclidean distance over a seeded pooled subsample.
/// Falls back to 1 when more than half the pairs coincide.
pub fn median_bandwidth(
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    cap: usize,
    seed: u64,
) -> f64 {
    let pooled = ndarray::concatenate(ndarray::Axis(0), &[real, fake]).expect("same width");
    let pooled = subsample(pooled.view(), cap.max(2), rng::stream(seed, STREAM_MEDIAN));
    let n = pooled.nrows();
    let mut distances: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| squared_distance(pooled.row(i), pooled.row(j)).sqrt())
        .collect();
    if distances.is_empty() {
        return 1.0;
    }
    let mid = distances.len() / 2;
    let (_, median, _) = distances.select_nth_unstable_by(mid, f64::total_cmp);
    if *median > 0.0 {
        *median
    } else {
        1.0
    }
}

fn check_inputs(real: ArrayView2<f64>, fake: ArrayView2<f64>) -> Result<()> {
    if real.nrows() < 2 || fake.nrows() < 2 {
        return Err(Error::arg("unbiased MMD needs at least two rows per side"));
    }
    if real.ncols() != fake.ncols() {
        return Err(Error::Shape {
            context: "mmd columns",
            expected: real.ncols(),
            found: fake.ncols(),
        });
    }
    Ok(())
}

/// Sum of `k(a_i, b_j)`, skipping `i == j` when `a` and `b` are the same set.
fn kernel_sum(a: ArrayView2<f64>, b: ArrayView2<f64>, same: bool, bandwidth: f64) -> f64 {
    let rows: Vec<f64> = (0..a.nrows())
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            (0..b.nrows())
                .filter(|&j| !(same && i == j))
                .map(|j| kernel(squared_distance(ai, b.row(j)), bandwidth))
                .sum()
        })
        .collect();
    rows.iter().sum()
}

fn unbiased(kxx: f64, kyy: f64, kxy: f64, m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n)
}

/// Unbiased squared MMD with an RBF kernel `exp(-|x - y|^2 / (2 s^2))`.
/// Each side is first reduced to at most `config.cap` rows.
pub fn mmd_rbf(
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    config: &MmdConfig,
) -> Result<MmdEstimate> {
    check_inputs(real, fake)?;
    let x = subsample(real, config.cap, rng::stream(config.seed, STREAM_REAL));
    let y = subsample(fake, config.cap, rng::stream(config.seed, STREAM_FAKE));
    let bandwidth = resolve_bandwidth(x.view(), y.view(), config)?;
    let value = unbiased(
        kernel_sum(x.view(), x.view(), true, bandwidth),
        kernel_sum(y.view(), y.view(), true, bandwidth),
        kernel_sum(x.view(), y.view(), false, bandwidth),
        x.nrows(),
        y.nrows(),
    );
    Ok(MmdEstimate { value, bandwidth })
}

fn resolve_bandwidth(x: ArrayView2<f64>, y: ArrayView2<f64>, config: &MmdConfig) -> Result<f64> {
    match config.bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => Ok(b),
        Some(b) => Err(Error::arg(format!("bandwidth must be positive, got {b}"))),
        None => Ok(median_bandwidth(x, y, config.median_cap, config.seed)),
    }
}

/// The estimate together with its permutation null, both on the same
/// subsample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdNull {
    pub estimate: MmdEstimate,
    pub null: Vec<f64>,
}

impl MmdNull {
    /// Central `level` interval of the null, from its empirical quantiles.
    pub fn band(&self, level: f64) -> (f64, f64) {
        let mut sorted = self.null.clone();
        sorted.sort_by(f64::total_cmp);
        let tail = (1.0 - level) / 2.0;
        let pick = |q: f64| {
            let i = (q * (sorted.len() - 1) as f64).round() as usize;
            sorted[i.min(sorted.len() - 1)]
        };
        (pick(tail), pick(1.0 - tail))
    }

    pub fn std_dev(&self) -> f64 {
        let n = self.null.len() as f64;
        let mean = self.null.iter().sum::<f64>() / n;
        (self.null.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    pub fn within(&self, level: f64) -> bool {
        let (lo, hi) = self.band(level);
        (lo..=hi).contains(&self.estimate.value)
    }
}

/// Permutation null of the unbiased estimator: pool both sides, relabel at
/// random keeping the group sizes, and recompute from a shared kernel matrix.
pub fn mmd_permutation_null(
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    config: &MmdConfig,
    permutations: usize,
) -> Result<MmdNull> {
    check_inputs(real, fake)?;
    if permutations == 0 {
        return Err(Error::arg(
            "permutation null needs at least one permutation",
        ));
    }
    let x = subsample(real, config.cap, rng::stream(config.seed, STREAM_REAL));
    let y = subsample(fake, config.cap, rng::stream(config.seed, STREAM_FAKE));
    let bandwidth = resolve_bandwidth(x.view(), y.view(), config)?;
    let (m, n) = (x.nrows(), y.nrows());
    let pooled = ndarray::concatenate(ndarray::Axis(0), &[x.view(), y.view()]).expect("same width");
    let total = m + n;
    let mut gram = Array2::<f64>::zeros((total, total));
    gram.axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = kernel(squared_distance(pooled.row(i), pooled.row(j)), bandwidth);
            }
        });

    // With S = 1'K1, a = K 1_X: sum over X x X is 1_X'a, X x Y is 1_Y'a, and
    // Y x Y is the remainder. RBF diagonals are exactly 1.
    let grand: f64 = gram.sum();
    let statistic = |in_x: &[bool]| {
        let indicator = Array1::from_iter(in_x.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        let a = gram.dot(&indicator);
        let xx_full: f64 = a
            .iter()
            .zip(in_x)
            .filter(|(_, b)| **b)
            .map(|(v, _)| v)
            .sum();
        let xy: f64 = a
            .iter()
            .zip(in_x)
            .filter(|(_, b)| !**b)
            .map(|(v, _)| v)
            .sum();
        let yy_full = grand - xx_full - 2.0 * xy;
        unbiased(xx_full - m as f64, yy_full - n as f64, xy, m, n)
    };

    let mut labels: Vec<bool> = (0..total).map(|i| i < m).collect();
    let value = statistic(&labels);
    let mut rng = rng::stream(config.seed, STREAM_PERMUTATION);
    let null = (0..permutations)
        .map(|_| {
            labels.shuffle(&mut rng);
            statistic(&labels)
        })
        .collect();
    Ok(MmdNull {
        estimate: MmdEstimate { value, bandwidth },
        null,
    })
}
