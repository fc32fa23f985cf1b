//! Reading spaces from JSON or CSV and writing versioned JSON reports.
//!
//! JSON input is `{"labels": [...], "dist": [[...]]}`; CSV input is a
//! square matrix with an optional header row of labels. Entries may be
//! `"p/q"`, integers or finite decimals and are read exactly.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::metric::{self, FiniteMetricSpace};
use crate::rational::{self, Rational};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    /// `.csv` means CSV, anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Parse(format!("unknown input format {other:?}"))),
        }
    }
}

/// Parses a space, checking structure only.
pub fn parse_space(text: &str, format: Format) -> Result<FiniteMetricSpace> {
    match format {
        Format::Json => parse_json(text),
        Format::Csv => parse_csv(text),
    }
}

/// Parses a space and rejects it unless it satisfies the triangle inequality.
pub fn ingest_str(text: &str, format: Format) -> Result<FiniteMetricSpace> {
    let space = parse_space(text, format)?;
    match metric::validate(&space).metric_failing_triple {
        None => Ok(space),
        Some((x, y, z)) => Err(Error::NotMetric(x, y, z)),
    }
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads and validates a space; `format` defaults to the file extension.
pub fn ingest(path: &Path, format: Option<Format>) -> Result<FiniteMetricSpace> {
    ingest_str(&read_file(path)?, format.unwrap_or_else(|| Format::from_path(path)))
}

fn parse_json(text: &str) -> Result<FiniteMetricSpace> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    space_from_json(&value)
}

pub fn space_from_json(value: &Value) -> Result<FiniteMetricSpace> {
    let dist = value
        .get("dist")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("missing \"dist\" array".into()))?;
    let matrix = dist
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let row = row
                .as_array()
                .ok_or_else(|| Error::Parse(format!("dist[{i}] is not an array")))?;
            row.iter()
                .enumerate()
                .map(|(j, entry)| {
                    rational::from_json(entry).map_err(|e| Error::Parse(format!("dist[{i}][{j}]: {e}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    match value.get("labels") {
        None => FiniteMetricSpace::from_matrix(matrix),
        Some(labels) => {
            let labels = labels
                .as_array()
                .ok_or_else(|| Error::Parse("\"labels\" is not an array".into()))?
                .iter()
                .map(|l| match l {
                    Value::String(s) => Ok(s.clone()),
                    Value::Number(n) => Ok(n.to_string()),
                    other => Err(Error::Parse(format!("bad label {other}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            FiniteMetricSpace::new(labels, matrix)
        }
    }
}

fn parse_csv(text: &str) -> Result<FiniteMetricSpace> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut labels: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("csv: {e}")))?;
        let line = record.position().map_or(index as u64 + 1, csv::Position::line);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let first = record.get(0).unwrap_or("");
        if rows.is_empty() && labels.is_none() && rational::parse(first).is_err() {
            labels = Some(record.iter().map(str::to_string).collect());
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                rational::parse(field)
                    .map_err(|_| Error::Parse(format!("line {line}, column {}: not a rational number: {field:?}", col + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    match labels {
        Some(labels) => FiniteMetricSpace::new(labels, rows),
        None => FiniteMetricSpace::from_matrix(rows),
    }
}

pub fn space_to_csv(space: &FiniteMetricSpace) -> String {
    let mut out = space.labels().join(",");
    out.push('\n');
    for row in space.matrix() {
        out.push_str(&row.iter().map(rational::format).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// `{"schema_version", "kind", "data"}` around a serialized payload.
pub fn envelope(kind: &str, data: impl Serialize) -> Result<Value> {
    let data = serde_json::to_value(data).map_err(|e| Error::Parse(format!("serialize: {e}")))?;
    Ok(serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "data": data,
    }))
}

pub fn to_pretty(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("json values always serialize");
    text.push('\n');
    text
}

/// Writes `value` as pretty JSON, creating parent directories.
pub fn emit_report(value: &Value, path: &Path) -> Result<()> {
    write_text(&to_pretty(value), path)
}

pub fn write_text(text: &str, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    std::fs::write(path, text).map_err(io_err)
}
