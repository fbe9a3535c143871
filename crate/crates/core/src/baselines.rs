//! Non-learned generators that resample the reference dataset.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::InterventionRecord;
use crate::generator::RecordGenerator;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Whole rows drawn uniformly with replacement.
    #[default]
    Shuffle,
    /// Every column drawn independently from its empirical marginal.
    Independent,
    /// "Random sampling" read as plain row redraw; identical to `Shuffle`.
    RowRedraw,
}

fn check(dataset: &[InterventionRecord], n: usize) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::arg("cannot resample an empty dataset"));
    }
    if n == 0 {
        return Err(Error::arg("requested zero rows"));
    }
    Ok(())
}

/// `n` rows drawn uniformly with replacement.
pub fn shuffle_sample(
    dataset: &[InterventionRecord],
    n: usize,
    seed: u64,
) -> Result<Vec<InterventionRecord>> {
    check(dataset, n)?;
    let mut rng = rng::from_seed(seed);
    Ok((0..n)
        .map(|_| dataset[rng.random_range(0..dataset.len())])
        .collect())
}

/// `n` rows whose columns are drawn independently, each from that column's
/// values in `dataset`. Areas are dropped because the coordinates no longer
/// come from one row.
pub fn independent_sample(
    dataset: &[InterventionRecord],
    n: usize,
    seed: u64,
) -> Result<Vec<InterventionRecord>> {
    check(dataset, n)?;
    let mut rng = rng::from_seed(seed);
    let len = dataset.len();
    let mut pick = || dataset[rng.random_range(0..len)];
    Ok((0..n)
        .map(|_| InterventionRecord {
            x: pick().x,
            y: pick().y,
            month: pick().month,
            day: pick().day,
            hour: pick().hour,
            duration: pick().duration,
            incident: pick().incident,
            area: None,
        })
        .collect())
}

pub fn baseline_sample(
    kind: BaselineKind,
    dataset: &[InterventionRecord],
    n: usize,
    seed: u64,
) -> Result<Vec<InterventionRecord>> {
    match kind {
        BaselineKind::Shuffle | BaselineKind::RowRedraw => shuffle_sample(dataset, n, seed),
        BaselineKind::Independent => independent_sample(dataset, n, seed),
    }
}

/// A baseline bound to its reference dataset.
#[derive(Debug, Clone)]
pub struct BaselineGenerator {
    kind: BaselineKind,
    dataset: Vec<InterventionRecord>,
}

impl BaselineGenerator {
    pub fn new(kind: BaselineKind, dataset: Vec<InterventionRecord>) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::arg("baseline needs a nonempty reference dataset"));
        }
        Ok(BaselineGenerator { kind, dataset })
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }
}

impl RecordGenerator for BaselineGenerator {
    fn generate(&mut self, n: usize, seed: u64) -> Result<Vec<InterventionRecord>> {
        baseline_sample(self.kind, &self.dataset, n, seed)
    }
}
