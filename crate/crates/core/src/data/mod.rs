//! Intervention records, their schema and the numeric encoding used by the
//! generators and metrics.

mod record;
mod schema;
mod surrogate;
mod zones;

pub use record::{read_csv, write_csv, Column, InterventionRecord, CSV_HEADER};
pub(crate) use schema::argmax;
pub use schema::{
    load_csv, CategoricalBlock, CategoricalSpec, ColumnKind, ColumnSpec, ContinuousSpec,
    DatasetSchema, EncodedLayout, EncodedMatrix, Normalization,
};
pub use surrogate::{
    surrogate_dataset, INCIDENT_CATEGORIES, SUMMER_INCIDENT, SUMMER_MONTHS, WINTER_INCIDENT,
    WINTER_MONTHS,
};
pub use zones::{
    assign_area, assign_areas, fit_zones, read_zones, write_zones, Zone, ZonePartition,
};

/// First day-of-year (0-based, non-leap) of each month.
pub const MONTH_START_DAY: [u16; 13] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334, 365];

/// Month (1..=12) that contains a 0-based day of year.
pub fn month_of_day(day: u16) -> u8 {
    let day = day.min(364);
    (MONTH_START_DAY.partition_point(|&start| start <= day)) as u8
}
