use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Canonical header; `area` may follow as an eighth column.
pub const CSV_HEADER: [&str; 7] = ["x", "y", "month", "day", "hour", "duration", "incident"];

/// One intervention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionRecord {
    /// Projected easting, meters.
    pub x: f64,
    /// Projected northing, meters.
    pub y: f64,
    /// 1..=12
    pub month: u8,
    /// Day of year, 0..=364.
    pub day: u16,
    /// 0..=23
    pub hour: u8,
    /// Minutes, at least 1.
    pub duration: u32,
    /// Incident category code.
    pub incident: u32,
    /// Zone id, when known.
    #[serde(default)]
    pub area: Option<u32>,
}

/// The seven generated variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Column {
    X,
    Y,
    Month,
    Day,
    Hour,
    Duration,
    Incident,
}

impl Column {
    pub const ALL: [Column; 7] = [
        Column::X,
        Column::Y,
        Column::Month,
        Column::Day,
        Column::Hour,
        Column::Duration,
        Column::Incident,
    ];

    pub fn name(self) -> &'static str {
        CSV_HEADER[self as usize]
    }

    pub fn from_name(name: &str) -> Option<Column> {
        Column::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Integer-valued columns are rounded when decoded.
    pub fn is_integer(self) -> bool {
        !matches!(self, Column::X | Column::Y)
    }

    /// Valid range for bounded integer columns.
    pub fn bounds(self) -> Option<(f64, f64)> {
        match self {
            Column::Month => Some((1.0, 12.0)),
            Column::Day => Some((0.0, 364.0)),
            Column::Hour => Some((0.0, 23.0)),
            Column::Duration => Some((1.0, u32::MAX as f64)),
            _ => None,
        }
    }
}

impl std::fmt::Display for Column {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl InterventionRecord {
    pub fn value(&self, column: Column) -> f64 {
        match column {
            Column::X => self.x,
            Column::Y => self.y,
            Column::Month => self.month as f64,
            Column::Day => self.day as f64,
            Column::Hour => self.hour as f64,
            Column::Duration => self.duration as f64,
            Column::Incident => self.incident as f64,
        }
    }

    /// Checks the value ranges that hold regardless of any fitted schema.
    pub fn validate(&self, row: usize) -> Result<()> {
        let fail = |message: String| Err(Error::Validation { row, message });
        if !self.x.is_finite() || !self.y.is_finite() {
            return fail(format!("non-finite coordinates ({}, {})", self.x, self.y));
        }
        if !(1..=12).contains(&self.month) {
            return fail(format!("month {} outside 1..=12", self.month));
        }
        if self.day > 364 {
            return fail(format!("day {} outside 0..=364", self.day));
        }
        if self.hour > 23 {
            return fail(format!("hour {} outside 0..=23", self.hour));
        }
        if self.duration < 1 {
            return fail("duration must be at least 1 minute".into());
        }
        Ok(())
    }
}

/// Reads canonical CSV. Rows are range-checked but not checked against a schema.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<InterventionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; 7];
    for (slot, name) in index.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
    }
    let area_index = headers.iter().position(|h| h == "area");

    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let fields = result?;
        let cell = |i: usize| fields.get(i).unwrap_or("");
        let record = InterventionRecord {
            x: parse_cell(cell(index[0]), row, "x")?,
            y: parse_cell(cell(index[1]), row, "y")?,
            month: parse_cell(cell(index[2]), row, "month")?,
            day: parse_cell(cell(index[3]), row, "day")?,
            hour: parse_cell(cell(index[4]), row, "hour")?,
            duration: parse_cell(cell(index[5]), row, "duration")?,
            incident: parse_cell(cell(index[6]), row, "incident")?,
            area: match area_index.map(cell) {
                None | Some("") => None,
                Some(text) => Some(parse_cell(text, row, "area")?),
            },
        };
        record.validate(row)?;
        records.push(record);
    }
    Ok(records)
}

fn parse_cell<T: std::str::FromStr>(text: &str, row: usize, column: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    text.parse().map_err(|e: T::Err| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("`{text}`: {e}"),
    })
}

/// Writes canonical CSV. The `area` column is emitted when any record carries one.
pub fn write_csv<W: Write>(writer: W, records: &[InterventionRecord]) -> Result<()> {
    let with_area = records.iter().any(|r| r.area.is_some());
    let mut wtr = csv::Writer::from_writer(writer);
    if with_area {
        let mut header = CSV_HEADER.to_vec();
        header.push("area");
        wtr.write_record(&header)?;
    } else {
        wtr.write_record(CSV_HEADER)?;
    }
    for r in records {
        let mut row = vec![
            r.x.to_string(),
            r.y.to_string(),
            r.month.to_string(),
            r.day.to_string(),
            r.hour.to_string(),
            r.duration.to_string(),
            r.incident.to_string(),
        ];
        if with_area {
            row.push(r.area.map(|a| a.to_string()).unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
