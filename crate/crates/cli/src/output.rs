//! Tables and documents written by the commands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lipolysis::sweep::fmt_f64;
use serde::ser::{Serialize, Serializer};
use serde_json::{json, Value};

use crate::config::{Format, RunConfig, SCHEMA};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Bool(bool),
    Text(String),
}

impl Field {
    fn csv(&self) -> String {
        match self {
            Field::Num(x) => fmt_f64(*x),
            Field::Bool(b) => b.to_string(),
            Field::Text(s) => s.clone(),
        }
    }
}

impl Serialize for Field {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Field::Num(x) if x.is_finite() => s.serialize_f64(*x),
            Field::Num(_) => s.serialize_none(),
            Field::Bool(b) => s.serialize_bool(*b),
            Field::Text(t) => s.serialize_str(t),
        }
    }
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::Num(x)
    }
}

impl From<bool> for Field {
    fn from(b: bool) -> Self {
        Field::Bool(b)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Field::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn to_json(&self) -> Value {
        json!({"columns": self.columns, "rows": self.rows})
    }
}

/// Result of one command: an optional table plus a JSON summary.
pub struct Report {
    pub command: &'static str,
    pub table: Table,
    pub summary: Value,
}

/// Envelope shared by every JSON document.
pub fn document(cfg: &RunConfig, command: &str, body: Vec<(&str, Value)>) -> Value {
    let mut doc = serde_json::Map::new();
    doc.insert("schema".into(), json!(SCHEMA));
    doc.insert("command".into(), json!(command));
    doc.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    if cfg.output.timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        doc.insert("created_unix".into(), json!(secs));
    }
    doc.insert(
        "config".into(),
        serde_json::to_value(cfg).expect("config serializes"),
    );
    for (k, v) in body {
        doc.insert(k.into(), v);
    }
    Value::Object(doc)
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// CSV goes to the output path (with a `.meta.json` sidecar) or stdout;
/// JSON bundles config, summary and table into one document.
pub fn emit(cfg: &RunConfig, report: &Report) -> Result<(), CliError> {
    let (main, meta) = match cfg.output.format {
        Format::Csv => {
            let meta = document(
                cfg,
                report.command,
                vec![("summary", report.summary.clone())],
            );
            (report.table.to_csv(), Some(meta))
        }
        Format::Json => {
            let doc = document(
                cfg,
                report.command,
                vec![
                    ("summary", report.summary.clone()),
                    ("table", report.table.to_json()),
                ],
            );
            (pretty(&doc), None)
        }
    };
    match &cfg.output.path {
        Some(path) => {
            write_file(path, &main)?;
            if let Some(meta) = meta {
                write_file(&sidecar(path), &pretty(&meta))?;
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(main.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_cells() {
        let mut t = Table::new(&["a", "b", "c"]);
        t.push(vec![0.5.into(), true.into(), Field::Num(f64::NAN)]);
        assert_eq!(t.to_csv(), "a,b,c\n5.0000000000000000e-1,true,nan\n");
        assert_eq!(t.to_json()["rows"][0], json!([0.5, true, null]));
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(
            sidecar(Path::new("out/run.csv")),
            PathBuf::from("out/run.csv.meta.json")
        );
    }
}
