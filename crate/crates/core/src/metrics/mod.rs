//! Fidelity metrics between a real and a synthetic dataset.
//!
//! Distances on whole rows (MMD, PRDC) work in the encoded space of the real
//! data's schema. Wasserstein works on raw columns scaled by the real range.
//! Histogram metrics work on the binnings of [`BinnedFeature`].

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{Column, DatasetSchema, InterventionRecord};
use crate::{rng, Result};

mod histogram;
mod mmd;
mod prdc;
mod stats;
mod wasserstein;

pub use histogram::{
    cooccurrence, cosine_similarity, jsd_percent, variation_percent, BinnedFeature, CountMatrix,
    Histogram, DURATION_BIN,
};
pub use mmd::{median_bandwidth, mmd_permutation_null, mmd_rbf, MmdConfig, MmdEstimate, MmdNull};
pub use prdc::{prdc, Prdc};
pub use stats::{column_stats, marginal_stats, MarginalStats};
pub use wasserstein::{
    wasserstein_1d, wasserstein_aggregate, wasserstein_columns, wasserstein_features,
};

const STREAM_PRDC_REAL: u64 = 11;
const STREAM_PRDC_FAKE: u64 = 12;

/// Features compared by Jensen-Shannon divergence.
pub const JSD_FEATURES: [BinnedFeature; 5] = [
    BinnedFeature::Month,
    BinnedFeature::Day,
    BinnedFeature::Hour,
    BinnedFeature::Incident,
    BinnedFeature::Area,
];

/// Features compared by per-bin variation.
pub const VARIATION_FEATURES: [BinnedFeature; 6] = [
    BinnedFeature::Month,
    BinnedFeature::Day,
    BinnedFeature::Hour,
    BinnedFeature::Duration,
    BinnedFeature::Incident,
    BinnedFeature::Area,
];

/// Keeps at most `cap` rows, chosen uniformly without replacement and kept in
/// their original order.
pub fn subsample(matrix: ArrayView2<f64>, cap: usize, mut rng: rng::Rng) -> Array2<f64> {
    if matrix.nrows() <= cap {
        return matrix.to_owned();
    }
    let mut picked = rand::seq::index::sample(&mut rng, matrix.nrows(), cap).into_vec();
    picked.sort_unstable();
    matrix.select(Axis(0), &picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub seed: u64,
    pub prdc_k: usize,
    pub prdc_cap: usize,
    pub mmd_cap: usize,
    pub mmd_median_cap: usize,
    pub mmd_bandwidth: Option<f64>,
    /// Add `incident` codes to the aggregate Wasserstein distance.
    pub include_categorical: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            seed: 0,
            prdc_k: 5,
            prdc_cap: 10_000,
            mmd_cap: 5_000,
            mmd_median_cap: 1_000,
            mmd_bandwidth: None,
            include_categorical: false,
        }
    }
}

impl MetricConfig {
    pub fn mmd(&self) -> MmdConfig {
        MmdConfig {
            bandwidth: self.mmd_bandwidth,
            cap: self.mmd_cap,
            median_cap: self.mmd_median_cap,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub real_rows: usize,
    pub fake_rows: usize,
    pub wasserstein_mean: f64,
    pub wasserstein: BTreeMap<Column, f64>,
    pub mmd: MmdEstimate,
    pub prdc: Prdc,
    /// Jensen-Shannon divergence, bits x 100.
    pub jsd: BTreeMap<BinnedFeature, f64>,
    /// `(min %, max %)` per-bin variation.
    pub variation: BTreeMap<BinnedFeature, (f64, f64)>,
    pub marginal_real: Vec<MarginalStats>,
    pub marginal_fake: Vec<MarginalStats>,
    /// Incident x month.
    pub cooccurrence_real: CountMatrix,
    pub cooccurrence_fake: CountMatrix,
    pub cooccurrence_cosine: f64,
    pub histograms_real: BTreeMap<BinnedFeature, Histogram>,
    pub histograms_fake: BTreeMap<BinnedFeature, Histogram>,
}

/// Runs the full battery. Area features are included only when every record
/// on both sides carries an area.
pub fn evaluate(
    real: &[InterventionRecord],
    fake: &[InterventionRecord],
    schema: &DatasetSchema,
    config: &MetricConfig,
) -> Result<FidelityReport> {
    let real_encoded = schema.encode(real)?;
    let fake_encoded = schema.encode(fake)?;

    let wasserstein = wasserstein_features(real, fake, config.include_categorical)?;
    let wasserstein_mean =
        wasserstein.iter().map(|(_, w)| w).sum::<f64>() / wasserstein.len() as f64;

    let mmd = mmd_rbf(
        real_encoded.values.view(),
        fake_encoded.values.view(),
        &config.mmd(),
    )?;
    let prdc = prdc(
        subsample(
            real_encoded.values.view(),
            config.prdc_cap,
            rng::stream(config.seed, STREAM_PRDC_REAL),
        )
        .view(),
        subsample(
            fake_encoded.values.view(),
            config.prdc_cap,
            rng::stream(config.seed, STREAM_PRDC_FAKE),
        )
        .view(),
        config.prdc_k,
    )?;

    let with_area = real.iter().chain(fake).all(|r| r.area.is_some());
    let features: Vec<BinnedFeature> = BinnedFeature::ALL
        .into_iter()
        .filter(|f| with_area || *f != BinnedFeature::Area)
        .collect();
    let mut histograms_real = BTreeMap::new();
    let mut histograms_fake = BTreeMap::new();
    for &f in &features {
        histograms_real.insert(f, Histogram::of(real, f)?);
        histograms_fake.insert(f, Histogram::of(fake, f)?);
    }
    let aligned = |f: BinnedFeature| histograms_real[&f].aligned(&histograms_fake[&f]);
    let mut jsd = BTreeMap::new();
    for f in JSD_FEATURES.into_iter().filter(|f| features.contains(f)) {
        let (_, a, b) = aligned(f);
        jsd.insert(f, jsd_percent(&a, &b)?);
    }
    let mut variation = BTreeMap::new();
    for f in VARIATION_FEATURES
        .into_iter()
        .filter(|f| features.contains(f))
    {
        let (_, a, b) = aligned(f);
        variation.insert(f, variation_percent(&a, &b)?);
    }

    let cooccurrence_real = cooccurrence(real, BinnedFeature::Incident, BinnedFeature::Month)?;
    let cooccurrence_fake = cooccurrence(fake, BinnedFeature::Incident, BinnedFeature::Month)?;
    Ok(FidelityReport {
        real_rows: real.len(),
        fake_rows: fake.len(),
        wasserstein_mean,
        wasserstein: wasserstein.into_iter().collect(),
        mmd,
        prdc,
        jsd,
        variation,
        marginal_real: marginal_stats(real)?,
        marginal_fake: marginal_stats(fake)?,
        cooccurrence_cosine: cosine_similarity(&cooccurrence_real, &cooccurrence_fake),
        cooccurrence_real,
        cooccurrence_fake,
        histograms_real,
        histograms_fake,
    })
}
