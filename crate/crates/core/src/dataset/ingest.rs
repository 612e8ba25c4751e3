//! CSV ingestion with a declared column mapping.

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{RawRow, TurbineSeries};
use crate::error::DataError;

/// Maps the required series fields onto CSV header names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub timestamp: String,
    pub wind_speed: String,
    pub power: String,
    pub direction: String,
    pub temperature: String,
    pub pressure: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            wind_speed: "wind_speed".into(),
            power: "power".into(),
            direction: "direction".into(),
            temperature: "temperature".into(),
            pressure: "pressure".into(),
        }
    }
}

/// Read one turbine's series from CSV.
///
/// Timestamps must parse as RFC 3339 instants; a cell that fails is a hard
/// error. Measurement cells that are empty or unparseable become missing
/// values and are dealt with at alignment time.
pub fn ingest_series(
    path: impl AsRef<Path>,
    turbine_id: impl Into<String>,
    schema: &ColumnMapping,
) -> Result<TurbineSeries, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DataError::FileNotFound(path.to_path_buf())
        } else {
            DataError::Io(e)
        }
    })?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));

    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let ts_col = column(&schema.timestamp)?;
    let wind_col = column(&schema.wind_speed)?;
    let power_col = column(&schema.power)?;
    let dir_col = column(&schema.direction)?;
    let temp_col = column(&schema.temperature)?;
    let press_col = column(&schema.pressure)?;

    let measurement = |record: &csv::StringRecord, col: usize| -> Option<f64> {
        record
            .get(col)
            .and_then(|cell| cell.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite())
    };

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_number = i + 2; // 1-based, after the header
        let raw_ts = record.get(ts_col).unwrap_or("").trim();
        let timestamp = parse_timestamp(raw_ts).ok_or_else(|| DataError::MalformedTimestamp {
            row: row_number,
            value: raw_ts.to_string(),
        })?;
        rows.push(RawRow {
            timestamp,
            wind_speed: measurement(&record, wind_col),
            power: measurement(&record, power_col),
            direction: measurement(&record, dir_col),
            temperature: measurement(&record, temp_col),
            pressure: measurement(&record, press_col),
        });
    }

    TurbineSeries::new(turbine_id, rows)
}

fn parse_timestamp(cell: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(cell).ok().map(|t| t.with_timezone(&Utc))
}

impl TurbineSeries {
    /// Write the series in the canonical schema ([`ColumnMapping::default`]),
    /// with missing measurements as empty cells. [`ingest_series`] reads this
    /// back unchanged.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "wind_speed", "power", "direction", "temperature", "pressure"])?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            w.write_record([
                row.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                cell(row.wind_speed),
                cell(row.power),
                cell(row.direction),
                cell(row.temperature),
                cell(row.pressure),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
