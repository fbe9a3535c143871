use crate::data::InterventionRecord;
use crate::Result;

/// Anything that can draw synthetic intervention records.
///
/// `seed` identifies the batch; implementations must return the same rows for
/// the same `(n, seed)` unless they are finite streams (external files), which
/// advance on every call.
pub trait RecordGenerator {
    fn generate(&mut self, n: usize, seed: u64) -> Result<Vec<InterventionRecord>>;
}

impl<F> RecordGenerator for F
where
    F: FnMut(usize, u64) -> Result<Vec<InterventionRecord>>,
{
    fn generate(&mut self, n: usize, seed: u64) -> Result<Vec<InterventionRecord>> {
        self(n, seed)
    }
}

/// Rows produced elsewhere (another toolkit's output), served in file order.
/// Each call takes the next `n` rows and ignores the seed; a short remainder
/// is returned as is, and an exhausted stream yields no rows.
#[derive(Debug, Clone)]
pub struct ExternalRecords {
    records: Vec<InterventionRecord>,
    position: usize,
}

impl ExternalRecords {
    pub fn new(records: Vec<InterventionRecord>) -> Self {
        ExternalRecords {
            records,
            position: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.records.len() - self.position
    }
}

impl RecordGenerator for ExternalRecords {
    fn generate(&mut self, n: usize, _seed: u64) -> Result<Vec<InterventionRecord>> {
        let end = (self.position + n).min(self.records.len());
        let batch = self.records[self.position..end].to_vec();
        self.position = end;
        Ok(batch)
    }
}
