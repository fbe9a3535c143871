//! Discrete-event replay of interventions against stations and their fleets.
//!
//! Each intervention starts at its day/hour plus a seeded minute, takes the
//! nearest available vehicle of every required type and keeps it busy for its
//! duration. The report records how many vehicles were busy as each
//! intervention began and how many of each type were sent.

use std::io::Write;

use crate::{Error, Result};

mod compare;
mod resources;
mod sim;

pub use compare::{compare_reports, Comparison, ComparisonRow};
pub use resources::{load_resources, read_rules, read_stations, DispatchRules, Resources, Station};
pub use sim::{
    simulate, simulate_with_starts, start_times, ConcurrencySample, EventKind, SimConfig,
    SimReport, TraceEvent, UnmetDemand,
};

impl SimReport {
    /// `time,busy` per intervention start.
    pub fn write_concurrency_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "busy"])?;
        for c in &self.concurrency {
            w.write_record([c.time.to_string(), c.busy.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<concurrency csv>", e))?;
        Ok(())
    }

    /// `type,count` per vehicle type.
    pub fn write_totals_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["type", "count"])?;
        for (k, v) in &self.totals {
            w.write_record([k.clone(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<totals csv>", e))?;
        Ok(())
    }
}
