//! Versioned JSON envelopes and commented CSV tables.
//!
//! A CSV report is a block of `# key: value` metadata lines followed by an
//! ordinary header row and data rows. Floats are written in Rust's shortest
//! round-trip form, so parsing a table reproduces every value bit for bit.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Self-describing wrapper around a command result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: serde_json::Value,
    pub result: T,
}

impl<T> Envelope<T> {
    pub fn new(command: &str, inputs: serde_json::Value, result: T) -> Self {
        Envelope {
            schema_version: SCHEMA_VERSION,
            tool: "sk-tap".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            inputs,
            result,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            meta: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.push((key.into(), value.into()));
        self
    }

    pub fn push_row<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width differs from header"
        );
        self.rows.push(row);
    }

    pub fn push_floats(&mut self, row: &[f64]) {
        self.push_row(row.iter().map(|&x| fmt_f64(x)));
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("no column '{name}'")))
    }

    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        self.rows
            .iter()
            .map(|r| {
                r[i].parse::<f64>().map_err(|_| {
                    Error::Format(format!("'{}' in column '{name}' is not a number", r[i]))
                })
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.meta {
            if k.contains(['\n', ':']) || v.contains('\n') {
                return Err(Error::Format(format!("metadata '{k}' cannot be written")));
            }
            out.push_str(&format!("# {k}: {v}\n"));
        }
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        out.push_str(&String::from_utf8(body).map_err(|e| Error::Format(e.to_string()))?);
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = Vec::new();
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let Some(rest) = line.strip_prefix('#') else {
                break;
            };
            let rest = rest.trim_end_matches(['\n', '\r']);
            let (k, v) = rest
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("malformed metadata line '{line}'")))?;
            meta.push((
                k.trim().to_string(),
                v.strip_prefix(' ').unwrap_or(v).to_string(),
            ));
            body_start += line.len();
        }
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(&text.as_bytes()[body_start..]);
        let header = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| {
                rec.map(|x| x.iter().map(str::to_string).collect())
                    .map_err(csv_err)
            })
            .collect::<Result<_>>()?;
        Ok(CsvTable { meta, header, rows })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
