//! Result files and the run manifest.
//!
//! Tables are comma-separated with a `name[unit]` header, LF line endings
//! and floats printed with 17 significant digits so they parse back to the
//! same bits. Dimensionless numbers use the unit `1`, text columns `-`.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TOOLKIT: &str = concat!("icc ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Float(v) if v.is_nan() => "nan".to_string(),
            Cell::Float(v) => if *v > 0.0 { "inf" } else { "-inf" }.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// True when `header` looks like `name[unit]` with a non-empty unit.
pub fn has_unit(header: &str) -> bool {
    match header.split_once('[') {
        Some((name, rest)) => {
            !name.is_empty() && rest.len() > 1 && rest.ends_with(']') && !rest[..rest.len() - 1].contains(['[', ']'])
        }
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        for h in headers {
            assert!(has_unit(h), "column `{h}` lacks a unit annotation");
        }
        Self { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.headers.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Writes result files into one directory and remembers their checksums.
#[derive(Debug)]
pub struct OutputDir {
    pub root: PathBuf,
    files: Vec<(String, String)>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self { root, files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push((name.to_string(), hex::encode(Sha256::digest(bytes))));
        Ok(())
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        self.write(name, table.to_csv().as_bytes())
    }

    /// (file name, sha256 hex) in write order.
    pub fn files(&self) -> &[(String, String)] {
        &self.files
    }
}

/// Reproducibility record written next to the results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub toolkit: String,
    pub verb: String,
    pub config_sha256: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<(String, String)>,
    pub summary: Map<String, Value>,
    /// (kind, exit code, message) when the run failed.
    pub error: Option<(String, i32, String)>,
}

impl RunManifest {
    pub fn to_json(&self) -> Value {
        json!({
            "toolkit": self.toolkit,
            "verb": self.verb,
            "config_sha256": self.config_sha256,
            "seed": self.seed,
            "started_unix_s": self.started_unix,
            "finished_unix_s": self.finished_unix,
            "status": if self.error.is_some() { "error" } else { "ok" },
            "error": self.error.as_ref().map(|(kind, code, message)| json!({
                "kind": kind,
                "exit_code": code,
                "message": message,
            })),
            "summary": Value::Object(self.summary.clone()),
            "outputs": self.outputs.iter().map(|(path, sha)| json!({"path": path, "sha256": sha})).collect::<Vec<_>>(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&self.to_json()).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
