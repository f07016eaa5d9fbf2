//! Line-delimited JSON records and CSV export.

use std::io::{BufRead, Write};

use metrotwin_core::metrology::MeasurementRecord;
use serde_json::Value;

pub const SCHEMA_VERSION: u64 = 1;

pub const CSV_HEADER: &str = "part_id,part_description,device,temperature_c,humidity_pct,nominal_mm,measured_mm,deviation_mm,tolerance_band_mm,timestamp_utc,operator_id,duration_s,repetition";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One JSON object with keys in sorted order, no trailing newline.
pub fn serialize_record(record: &MeasurementRecord) -> String {
    let mut value = serde_json::to_value(record).expect("records serialize");
    if let Value::Object(map) = &mut value {
        map.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    }
    value.to_string()
}

/// Parse and validate one line. `line` is the 1-based line number used
/// in errors.
pub fn parse_record(text: &str, line: usize) -> Result<MeasurementRecord, FormatError> {
    let err = |message: String| FormatError::Parse { line, message };
    let value: Value = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    parse_value(value).map_err(err)
}

/// Same as [`parse_record`] for an already decoded JSON value.
pub fn parse_value(value: Value) -> Result<MeasurementRecord, String> {
    let Value::Object(mut map) = value else {
        return Err("expected a JSON object".into());
    };
    match map.remove("schema_version") {
        None => {}
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(v) => return Err(format!("unsupported schema_version {v}")),
    }
    let record: MeasurementRecord = serde_json::from_value(Value::Object(map)).map_err(|e| e.to_string())?;
    record.validate().map_err(|e| e.to_string())?;
    Ok(record)
}

/// Read every complete line. A final line without its newline is an
/// unfinished append and is skipped.
pub fn read_jsonl<R: BufRead>(mut reader: R) -> Result<Vec<MeasurementRecord>, FormatError> {
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut line = 0;
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 || !buf.ends_with('\n') {
            break;
        }
        line += 1;
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        out.push(parse_record(text, line)?);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut writer: W, records: &[MeasurementRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(writer, "{}", serialize_record(r))?;
    }
    writer.flush()
}

pub fn write_csv<W: Write>(writer: W, records: &[MeasurementRecord]) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.write_record([
            r.part_id.clone(),
            r.part_description.clone(),
            r.device.as_str().to_string(),
            r.temperature.to_string(),
            r.humidity.to_string(),
            r.nominal_value.to_string(),
            r.measured_value.to_string(),
            r.deviation.to_string(),
            r.tolerance_band.to_string(),
            r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            r.operator_id.clone(),
            r.duration.to_string(),
            r.repetition_index.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
