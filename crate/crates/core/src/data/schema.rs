use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use super::record::{read_csv, Column, InterventionRecord};
use crate::{Error, Result};

/// How continuous columns are mapped to the generator's numeric space.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Empirical quantile mapped through the standard normal inverse CDF.
    #[default]
    Quantile,
    /// Affine map of `[min, max]` onto `[-1, 1]`.
    MinMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSpec {
    /// Sorted ascending reference sample.
    pub reference: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    /// Observed codes, sorted ascending. One-hot position = index in this list.
    pub codes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous(ContinuousSpec),
    Categorical(CategoricalSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub column: Column,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// Per-column descriptors fitted on a reference dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub normalization: Normalization,
}

/// A one-hot block inside an encoded row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalBlock {
    pub column: Column,
    pub offset: usize,
    pub width: usize,
}

/// Column layout of an encoded row: continuous values first, then one one-hot
/// block per categorical column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedLayout {
    pub continuous: Vec<Column>,
    pub categorical: Vec<CategoricalBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub layout: EncodedLayout,
    pub values: Array2<f64>,
}

fn standard_normal() -> Normal {
    Normal::standard()
}

impl ContinuousSpec {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut reference: Vec<f64> = values.into_iter().collect();
        if reference.is_empty() {
            return Err(Error::Schema(
                "cannot fit a continuous column on zero rows".into(),
            ));
        }
        if reference.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema(
                "non-finite value in continuous column".into(),
            ));
        }
        reference.sort_by(f64::total_cmp);
        Ok(ContinuousSpec {
            min: reference[0],
            max: reference[reference.len() - 1],
            reference,
        })
    }

    fn degenerate(&self) -> bool {
        self.max <= self.min
    }

    /// 1-based mid-rank of `v` within the reference sample, interpolated for
    /// values between reference points and clamped outside them.
    fn mid_rank(&self, v: f64) -> f64 {
        let r = &self.reference;
        let n = r.len();
        let below = r.partition_point(|&x| x < v);
        let upto = r.partition_point(|&x| x <= v);
        if upto > below {
            return (below + 1 + upto) as f64 / 2.0;
        }
        if below == 0 {
            return 1.0;
        }
        if below == n {
            return n as f64;
        }
        let (left, right) = (r[below - 1], r[below]);
        let left_rank = self.mid_rank(left);
        let right_rank = self.mid_rank(right);
        left_rank + (v - left) / (right - left) * (right_rank - left_rank)
    }

    /// Forward transform of one value.
    pub fn normalize(&self, v: f64, normalization: Normalization) -> f64 {
        if self.degenerate() {
            return 0.0;
        }
        match normalization {
            Normalization::Quantile => {
                let n = self.reference.len() as f64;
                let p = (self.mid_rank(v) - 0.5) / n;
                standard_normal().inverse_cdf(p)
            }
            Normalization::MinMax => {
                let v = v.clamp(self.min, self.max);
                2.0 * (v - self.min) / (self.max - self.min) - 1.0
            }
        }
    }

    /// Inverse transform, clipped to the observed range.
    pub fn denormalize(&self, z: f64, normalization: Normalization) -> f64 {
        if self.degenerate() {
            return self.min;
        }
        match normalization {
            Normalization::Quantile => {
                let r = &self.reference;
                let n = r.len();
                let p = standard_normal().cdf(z);
                let pos = (p * n as f64 + 0.5).clamp(1.0, n as f64);
                let lo = pos.floor() as usize;
                let frac = pos - lo as f64;
                if lo >= n {
                    return r[n - 1];
                }
                r[lo - 1] + frac * (r[lo] - r[lo - 1])
            }
            Normalization::MinMax => {
                let v = self.min + (z + 1.0) / 2.0 * (self.max - self.min);
                v.clamp(self.min, self.max)
            }
        }
    }
}

impl CategoricalSpec {
    pub fn cardinality(&self) -> usize {
        self.codes.len()
    }

    pub fn position(&self, code: u32) -> Option<usize> {
        self.codes.binary_search(&code).ok()
    }
}

impl DatasetSchema {
    /// Fits descriptors on `records`. Coordinates, temporal fields and duration
    /// are continuous; incident is categorical.
    pub fn fit(records: &[InterventionRecord], normalization: Normalization) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Schema(
                "cannot fit categorical cardinality on an empty dataset".into(),
            ));
        }
        let mut columns = Vec::with_capacity(Column::ALL.len());
        for column in Column::ALL {
            let kind = if column == Column::Incident {
                let mut codes: Vec<u32> = records.iter().map(|r| r.incident).collect();
                codes.sort_unstable();
                codes.dedup();
                ColumnKind::Categorical(CategoricalSpec { codes })
            } else {
                ColumnKind::Continuous(ContinuousSpec::fit(
                    records.iter().map(|r| r.value(column)),
                )?)
            };
            columns.push(ColumnSpec { column, kind });
        }
        Ok(DatasetSchema {
            columns,
            normalization,
        })
    }

    pub fn spec(&self, column: Column) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.column == column)
    }

    pub fn continuous(&self, column: Column) -> Option<&ContinuousSpec> {
        match self.spec(column).map(|c| &c.kind) {
            Some(ColumnKind::Continuous(spec)) => Some(spec),
            _ => None,
        }
    }

    pub fn categorical(&self, column: Column) -> Option<&CategoricalSpec> {
        match self.spec(column).map(|c| &c.kind) {
            Some(ColumnKind::Categorical(spec)) => Some(spec),
            _ => None,
        }
    }

    /// Structural checks: one descriptor per column, non-empty categories,
    /// sorted references.
    pub fn check(&self) -> Result<()> {
        for column in Column::ALL {
            let n = self.columns.iter().filter(|c| c.column == column).count();
            if n != 1 {
                return Err(Error::Schema(format!(
                    "{n} descriptors for column `{column}`"
                )));
            }
        }
        for spec in &self.columns {
            match &spec.kind {
                ColumnKind::Categorical(c) => {
                    if c.codes.is_empty() || c.codes.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::Schema(format!(
                            "column `{}` needs at least one strictly increasing code",
                            spec.column
                        )));
                    }
                }
                ColumnKind::Continuous(c) => {
                    if c.reference.is_empty() || c.reference.windows(2).any(|w| w[0] > w[1]) {
                        return Err(Error::Schema(format!(
                            "column `{}` reference sample must be non-empty and sorted",
                            spec.column
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Range checks plus category membership.
    pub fn validate(&self, records: &[InterventionRecord]) -> Result<()> {
        let incidents = self.categorical(Column::Incident);
        for (row, r) in records.iter().enumerate() {
            r.validate(row)?;
            if let Some(spec) = incidents {
                if spec.position(r.incident).is_none() {
                    return Err(Error::Validation {
                        row,
                        message: format!("unknown incident code {}", r.incident),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> EncodedLayout {
        let mut continuous = Vec::new();
        let mut categorical = Vec::new();
        for spec in &self.columns {
            if let ColumnKind::Continuous(_) = spec.kind {
                continuous.push(spec.column);
            }
        }
        let mut offset = continuous.len();
        for spec in &self.columns {
            if let ColumnKind::Categorical(c) = &spec.kind {
                categorical.push(CategoricalBlock {
                    column: spec.column,
                    offset,
                    width: c.cardinality(),
                });
                offset += c.cardinality();
            }
        }
        EncodedLayout {
            continuous,
            categorical,
        }
    }

    /// Maps records to the numeric training representation.
    pub fn encode(&self, records: &[InterventionRecord]) -> Result<EncodedMatrix> {
        let layout = self.layout();
        let mut values = Array2::zeros((records.len(), layout.width()));
        let continuous: Vec<(Column, &ContinuousSpec)> = layout
            .continuous
            .iter()
            .map(|&c| (c, self.continuous(c).expect("layout built from schema")))
            .collect();
        for (row, r) in records.iter().enumerate() {
            for (j, (column, spec)) in continuous.iter().enumerate() {
                values[[row, j]] = spec.normalize(r.value(*column), self.normalization);
            }
            for block in &layout.categorical {
                let spec = self
                    .categorical(block.column)
                    .expect("layout built from schema");
                let code = r.value(block.column) as u32;
                let pos = spec.position(code).ok_or_else(|| Error::Encoding {
                    row,
                    message: format!("unseen {} code {code}", block.column),
                })?;
                values[[row, block.offset + pos]] = 1.0;
            }
        }
        Ok(EncodedMatrix { layout, values })
    }

    /// Inverts [`encode`](Self::encode): quantile inverse with clipping for
    /// continuous columns, argmax for one-hot blocks, rounding for integers.
    pub fn decode(&self, matrix: &EncodedMatrix) -> Result<Vec<InterventionRecord>> {
        let layout = &matrix.layout;
        if *layout != self.layout() {
            return Err(Error::Schema("encoded layout does not match schema".into()));
        }
        let mut records = Vec::with_capacity(matrix.values.nrows());
        for (row, values) in matrix.values.outer_iter().enumerate() {
            if let Some(column) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Decode {
                    row,
                    column,
                    value: values[column],
                });
            }
            let mut record = InterventionRecord {
                x: 0.0,
                y: 0.0,
                month: 1,
                day: 0,
                hour: 0,
                duration: 1,
                incident: 0,
                area: None,
            };
            for (j, &column) in layout.continuous.iter().enumerate() {
                let spec = self.continuous(column).expect("layout built from schema");
                let v = spec.denormalize(values[j], self.normalization);
                set_value(&mut record, column, v);
            }
            for block in &layout.categorical {
                let spec = self
                    .categorical(block.column)
                    .expect("layout built from schema");
                let slice = values.slice(ndarray::s![block.offset..block.offset + block.width]);
                let pos = argmax(slice.iter().copied());
                set_value(&mut record, block.column, spec.codes[pos] as f64);
            }
            records.push(record);
        }
        Ok(records)
    }

    /// Stable digest of the schema, stored in checkpoints.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Index of the first maximal element.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn set_value(record: &mut InterventionRecord, column: Column, v: f64) {
    let int = |v: f64| {
        let (lo, hi) = column.bounds().unwrap_or((0.0, u32::MAX as f64));
        v.round().clamp(lo, hi)
    };
    match column {
        Column::X => record.x = v,
        Column::Y => record.y = v,
        Column::Month => record.month = int(v) as u8,
        Column::Day => record.day = int(v) as u16,
        Column::Hour => record.hour = int(v) as u8,
        Column::Duration => record.duration = int(v) as u32,
        Column::Incident => record.incident = v.round().max(0.0) as u32,
    }
}

impl EncodedLayout {
    pub fn width(&self) -> usize {
        self.continuous.len() + self.categorical.iter().map(|b| b.width).sum::<usize>()
    }

    /// Layout with `column` removed and block offsets recomputed.
    pub fn without(&self, column: Column) -> EncodedLayout {
        let continuous: Vec<Column> = self
            .continuous
            .iter()
            .copied()
            .filter(|&c| c != column)
            .collect();
        let mut offset = continuous.len();
        let categorical = self
            .categorical
            .iter()
            .filter(|b| b.column != column)
            .map(|b| {
                let block = CategoricalBlock { offset, ..*b };
                offset += b.width;
                block
            })
            .collect();
        EncodedLayout {
            continuous,
            categorical,
        }
    }

    /// Source column index in `self` for every column of `other` (a sub-layout).
    pub fn projection(&self, other: &EncodedLayout) -> Vec<usize> {
        let mut index = Vec::with_capacity(other.width());
        for c in &other.continuous {
            index.push(
                self.continuous
                    .iter()
                    .position(|x| x == c)
                    .expect("sub-layout"),
            );
        }
        for b in &other.categorical {
            let src = self
                .categorical
                .iter()
                .find(|x| x.column == b.column)
                .expect("sub-layout");
            index.extend(src.offset..src.offset + src.width);
        }
        index
    }
}

/// Reads a dataset and either fits a schema on it or validates it against
/// the given one.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: Option<&DatasetSchema>,
) -> Result<(Vec<InterventionRecord>, DatasetSchema)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let records = read_csv(std::io::BufReader::new(file))?;
    let schema = match schema {
        Some(schema) => {
            schema.check()?;
            schema.clone()
        }
        None => DatasetSchema::fit(&records, Normalization::Quantile)?,
    };
    schema.validate(&records)?;
    Ok((records, schema))
}
