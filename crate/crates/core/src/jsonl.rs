//! Line-delimited JSON record files.
//!
//! Files written by this crate open with a header line naming the schema
//! (`{"schema":"...","version":1,...}`); readers accept files with or
//! without one so that externally produced dumps load too.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub schema: String,
    pub version: u32,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl FileHeader {
    pub fn new(schema: impl Into<String>) -> Self {
        FileHeader {
            schema: schema.into(),
            version: 1,
            extra: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.extra.insert(key.to_string(), value.into());
        self
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.extra.get(key).and_then(Value::as_str)
    }
}

/// A line that failed to parse, kept for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub message: String,
}

fn is_header(value: &Value) -> bool {
    value.get("schema").is_some_and(Value::is_string) && value.get("version").is_some()
}

/// Serialize records to JSONL bytes, header first.
pub fn to_bytes<T: Serialize>(header: Option<&FileHeader>, records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    if let Some(h) = header {
        serde_json::to_writer(&mut out, h).expect("header serializes");
        out.push(b'\n');
    }
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

pub fn write_records<T: Serialize>(
    path: &Path,
    header: Option<&FileHeader>,
    records: &[T],
) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&to_bytes(header, records))
        .and_then(|_| w.flush())
        .map_err(|e| CoreError::io(path, e))
}

/// Lenient read: malformed lines become diagnostics instead of errors.
pub fn read_lenient<T: DeserializeOwned>(
    path: &Path,
) -> Result<(Option<FileHeader>, Vec<(usize, T)>, Vec<LineDiagnostic>)> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut header = None;
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                diagnostics.push(LineDiagnostic {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if records.is_empty() && header.is_none() && is_header(&value) {
            match serde_json::from_value(value) {
                Ok(h) => header = Some(h),
                Err(e) => diagnostics.push(LineDiagnostic {
                    line: line_no,
                    message: format!("bad header: {e}"),
                }),
            }
            continue;
        }
        match serde_json::from_value(value) {
            Ok(r) => records.push((line_no, r)),
            Err(e) => diagnostics.push(LineDiagnostic {
                line: line_no,
                message: e.to_string(),
            }),
        }
    }
    Ok((header, records, diagnostics))
}

/// Strict read: the first malformed line is an error.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<(Option<FileHeader>, Vec<T>)> {
    let (header, records, diagnostics) = read_lenient(path)?;
    if let Some(d) = diagnostics.into_iter().next() {
        return Err(CoreError::MalformedRecord {
            path: path.to_path_buf(),
            line: d.line,
            message: d.message,
        });
    }
    Ok((header, records.into_iter().map(|(_, r)| r).collect()))
}
