//! Safecast "Daily export" ingestion: header mapping, row validation, unit
//! filtering and the fixed-order readings CSV consumed by later stages.

mod timestamp;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use timestamp::{format_unix_timestamp, to_unix_timestamp};

/// Header names for the columns the pipeline needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaMapping {
    pub captured_time: String,
    pub latitude: String,
    pub longitude: String,
    pub value: String,
    pub unit: String,
    pub device_id: String,
    pub uploaded_time: String,
}

impl Default for SchemaMapping {
    fn default() -> Self {
        SchemaMapping {
            captured_time: "Captured Time".into(),
            latitude: "Latitude".into(),
            longitude: "Longitude".into(),
            value: "Value".into(),
            unit: "Unit".into(),
            device_id: "Device ID".into(),
            uploaded_time: "Uploaded Time".into(),
        }
    }
}

/// Unit tokens accepted as µSv/h, compared case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitFilter(pub Vec<String>);

impl Default for UnitFilter {
    fn default() -> Self {
        UnitFilter(["usv", "µSv/h", "usv/h", "uSv/h"].map(String::from).to_vec())
    }
}

impl UnitFilter {
    pub fn accepts(&self, unit: &str) -> bool {
        let unit = unit.trim().to_lowercase();
        self.0.iter().any(|u| u.trim().to_lowercase() == unit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub captured_time: String,
    pub latitude: f64,
    pub longitude: f64,
    pub value: f64,
    pub unit: String,
    pub device_id: String,
    pub uploaded_time: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiationReading {
    pub captured_unix: f64,
    pub latitude: f64,
    pub longitude: f64,
    pub value_usv_h: f64,
    pub device_id: String,
    pub uploaded_unix: f64,
}

/// Row accounting across parsing and unit filtering.
/// `rows_read == rows_kept + rows_dropped_malformed + rows_dropped_unit`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_dropped_malformed: usize,
    pub rows_dropped_unit: usize,
}

impl IngestReport {
    pub fn reconciles(&self) -> bool {
        self.rows_read == self.rows_kept + self.rows_dropped_malformed + self.rows_dropped_unit
    }
}

struct ColumnIndex {
    captured: usize,
    lat: usize,
    lon: usize,
    value: usize,
    unit: usize,
    device: usize,
    uploaded: usize,
    width: usize,
}

impl ColumnIndex {
    fn resolve(headers: &csv::StringRecord, schema: &SchemaMapping) -> Result<Self> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name.trim())
                .ok_or_else(|| Error::MissingColumn { column: name.to_string() })
        };
        Ok(ColumnIndex {
            captured: find(&schema.captured_time)?,
            lat: find(&schema.latitude)?,
            lon: find(&schema.longitude)?,
            value: find(&schema.value)?,
            unit: find(&schema.unit)?,
            device: find(&schema.device_id)?,
            uploaded: find(&schema.uploaded_time)?,
            width: headers.len(),
        })
    }

    fn record(&self, rec: &csv::StringRecord) -> Option<RawRecord> {
        if rec.len() != self.width {
            return None;
        }
        let num = |i: usize| rec[i].trim().parse::<f64>().ok().filter(|v| v.is_finite());
        let latitude = num(self.lat).filter(|v| (-90.0..=90.0).contains(v))?;
        let longitude = num(self.lon).filter(|v| (-180.0..=180.0).contains(v))?;
        let value = num(self.value)?;
        let unit = rec[self.unit].trim();
        if unit.is_empty() {
            return None;
        }
        Some(RawRecord {
            captured_time: rec[self.captured].trim().to_string(),
            latitude,
            longitude,
            value,
            unit: unit.to_string(),
            device_id: rec[self.device].trim().to_string(),
            uploaded_time: rec[self.uploaded].trim().to_string(),
        })
    }
}

/// Parses an export CSV. Malformed data rows (wrong field count,
/// unparseable numerics, out-of-range coordinates) are counted and skipped;
/// only a header without a required column is fatal.
pub fn parse_export<R: Read>(
    input: R,
    schema: &SchemaMapping,
) -> Result<(Vec<RawRecord>, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(input);
    let cols = ColumnIndex::resolve(rdr.headers()?, schema)?;

    let mut report = IngestReport::default();
    let mut records = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                report.rows_read += 1;
                match cols.record(&rec) {
                    Some(r) => {
                        report.rows_kept += 1;
                        records.push(r);
                    }
                    None => report.rows_dropped_malformed += 1,
                }
            }
            // Invalid UTF-8 and similar per-row faults.
            Err(err) if !err.is_io_error() => {
                report.rows_read += 1;
                report.rows_dropped_malformed += 1;
            }
            Err(err) => return Err(err.into()),
        }
    }
    Ok((records, report))
}

/// Keeps µSv/h records and converts their timestamps. Updates `report` so it
/// keeps reconciling: unit mismatches move to `rows_dropped_unit`, negative
/// values and bad timestamps to `rows_dropped_malformed`.
pub fn filter_radiation(
    records: &[RawRecord],
    units: &UnitFilter,
    report: &mut IngestReport,
) -> Vec<RadiationReading> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if !units.accepts(&r.unit) {
            report.rows_kept -= 1;
            report.rows_dropped_unit += 1;
            continue;
        }
        let times = to_unix_timestamp(&r.captured_time)
            .and_then(|c| to_unix_timestamp(&r.uploaded_time).map(|u| (c, u)));
        match times {
            Ok((captured_unix, uploaded_unix)) if r.value >= 0.0 => out.push(RadiationReading {
                captured_unix,
                latitude: r.latitude,
                longitude: r.longitude,
                value_usv_h: r.value,
                device_id: r.device_id.clone(),
                uploaded_unix,
            }),
            _ => {
                report.rows_kept -= 1;
                report.rows_dropped_malformed += 1;
            }
        }
    }
    out
}

const READING_HEADER: [&str; 6] =
    ["captured_unix", "latitude", "longitude", "value_usv_h", "device_id", "uploaded_unix"];

pub fn write_readings<W: Write>(w: W, readings: &[RadiationReading]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(READING_HEADER)?;
    for r in readings {
        out.write_record([
            r.captured_unix.to_string(),
            r.latitude.to_string(),
            r.longitude.to_string(),
            r.value_usv_h.to_string(),
            r.device_id.clone(),
            r.uploaded_unix.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<readings>", e))?;
    Ok(())
}

pub fn read_readings<R: Read>(r: R) -> Result<Vec<RadiationReading>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    for (i, want) in READING_HEADER.iter().enumerate() {
        if headers.get(i) != Some(want) {
            return Err(Error::MissingColumn { column: want.to_string() });
        }
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::shape(format!("readings row {}: bad field {i}", line + 1)))
        };
        out.push(RadiationReading {
            captured_unix: num(0)?,
            latitude: num(1)?,
            longitude: num(2)?,
            value_usv_h: num(3)?,
            device_id: rec.get(4).unwrap_or_default().to_string(),
            uploaded_unix: num(5)?,
        });
    }
    Ok(out)
}
