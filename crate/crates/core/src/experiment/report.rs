//! Tabular experiment output with CSV and JSON writers.
//!
//! Numbers are written as `{:.16e}` (17 significant digits) so that they
//! round-trip exactly; non-finite values become `null` in JSON and `NaN`/`inf`
//! in CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};

use super::config::OutputFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub family: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub generated_at: u64,
    pub threads: usize,
    pub box_radius: Option<u64>,
    #[serde(serialize_with = "ser_opt_number", deserialize_with = "de_opt_number")]
    pub trust_limit: f64,
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub metadata: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub verdicts: Vec<Verdict>,
}

pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

fn raw_number(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() { format_number(x) } else { "null".to_string() };
    RawValue::from_string(text).expect("valid JSON number")
}

fn ser_opt_number<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    raw_number(*x).serialize(s)
}

fn de_opt_number<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Serialize)]
struct DataOut<'a> {
    columns: &'a [String],
    rows: Vec<Vec<Box<RawValue>>>,
    verdicts: &'a [Verdict],
}

#[derive(Serialize)]
struct ReportOut<'a> {
    metadata: &'a Metadata,
    #[serde(flatten)]
    data: DataOut<'a>,
}

#[derive(Deserialize)]
struct ReportIn {
    metadata: Metadata,
    columns: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
    verdicts: Vec<Verdict>,
}

impl Report {
    pub fn new(metadata: Metadata, columns: &[&str]) -> Self {
        Report {
            metadata,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_verdict(&mut self, name: &str, passed: bool) {
        self.verdicts.push(Verdict {
            name: name.to_string(),
            passed,
        });
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    fn data(&self) -> DataOut<'_> {
        DataOut {
            columns: &self.columns,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|&x| raw_number(x)).collect())
                .collect(),
            verdicts: &self.verdicts,
        }
    }

    /// The data section only (no metadata), for determinism comparisons.
    pub fn data_json(&self) -> String {
        serde_json::to_string(&self.data()).expect("serializable")
    }

    pub fn to_json(&self) -> String {
        let out = ReportOut {
            metadata: &self.metadata,
            data: self.data(),
        };
        serde_json::to_string_pretty(&out).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: ReportIn = serde_json::from_str(text)
            .map_err(|e| Error::config("report", format!("malformed report: {e}")))?;
        Ok(Report {
            metadata: r.metadata,
            columns: r.columns,
            rows: r
                .rows
                .into_iter()
                .map(|row| row.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
                .collect(),
            verdicts: r.verdicts,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|&x| format_number(x))).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

pub fn write_report(report: &Report, format: OutputFormat, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io)?;
    file.write_all(report.render(format).as_bytes()).map_err(io)?;
    file.flush().map_err(io)
}
