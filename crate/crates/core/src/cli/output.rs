//! Report containers and writers.
//!
//! Every CSV file carries a header row and a fixed column order; floats are
//! written with 9 significant digits. JSON documents are pretty-printed with
//! keys in declaration order and floats in shortest round-trip form.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::svg::Plot;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Encode { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    pub fn all() -> Vec<Format> {
        vec![Format::Csv, Format::Json, Format::Svg]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
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

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
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

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// 9 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    /// File stem.
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(name: &str, header: Vec<&'static str>) -> Self {
        Self {
            name: name.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Everything one run wants to write.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub tables: Vec<CsvTable>,
    /// (file stem, serialized document)
    pub json: Vec<(String, String)>,
    pub plots: Vec<Plot>,
}

impl Report {
    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let text = serde_json::to_string_pretty(value).expect("report types serialize");
        self.json.push((name.to_string(), text));
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_csv(table: &CsvTable, path: &Path) -> Result<(), OutputError> {
    let encode = |e: csv::Error| OutputError::Encode {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(encode)?;
    w.write_record(&table.header).map_err(encode)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render)).map_err(encode)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes the requested formats of `report` into `dir`, creating it if
/// needed, and returns the written paths in order.
pub fn write_outputs(report: &Report, formats: &[Format], dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    if formats.contains(&Format::Csv) {
        for table in &report.tables {
            let path = dir.join(format!("{}.csv", table.name));
            write_csv(table, &path)?;
            written.push(path);
        }
    }
    if formats.contains(&Format::Json) {
        for (name, text) in &report.json {
            let path = dir.join(format!("{name}.json"));
            fs::write(&path, format!("{text}\n")).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    if formats.contains(&Format::Svg) {
        for plot in &report.plots {
            let path = dir.join(format!("{}.svg", plot.name));
            fs::write(&path, plot.render()).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_nine_significant_digits() {
        assert_eq!(format_float(1.0), "1.00000000e0");
        assert_eq!(format_float(-0.263_539_123_45), "-2.63539123e-1");
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn writes_selected_formats_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut report = Report::default();
        let mut t = CsvTable::new("tab", vec!["a", "b"]);
        t.push(vec![1.5.into(), "x".into()]);
        report.tables.push(t);
        report.add_json("doc", &serde_json::json!({"k": 0.1}));
        let files = write_outputs(&report, &[Format::Csv], dir.path()).unwrap();
        assert_eq!(files, vec![dir.path().join("tab.csv")]);
        let text = fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text, "a,b\n1.50000000e0,x\n");
        assert!(!dir.path().join("doc.json").exists());
    }
}
