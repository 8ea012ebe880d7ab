use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use collapsim_core::stats::Histogram;
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, Format};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => json!(v),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

/// A named series written to its own data file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn histogram(name: &str, h: &Histogram) -> Self {
        let mut t = Table::new(name, &["bin_lo", "bin_hi", "count"]);
        let w = h.bin_width();
        for (b, c) in h.counts.iter().enumerate() {
            let lo = h.lo + b as f64 * w;
            t.push(vec![lo.into(), (lo + w).into(), (*c).into()]);
        }
        t
    }

    pub fn file_name(&self, format: Format) -> String {
        match format {
            Format::Csv => format!("{}.csv", self.name),
            Format::Json => format!("{}.json", self.name),
        }
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut s = self.columns.join(",");
                s.push('\n');
                for row in &self.rows {
                    s.push_str(&row.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
                    s.push('\n');
                }
                s
            }
            Format::Json => {
                let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
                let mut s = serde_json::to_string_pretty(&json!({ "columns": self.columns, "rows": rows }))
                    .expect("tables serialize");
                s.push('\n');
                s
            }
        }
    }
}

/// A reported number and the table it can be recomputed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Stat {
    pub name: &'static str,
    pub value: f64,
    pub stderr: Option<f64>,
    pub source: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub stats: Vec<Stat>,
    /// Names of tables holding histograms.
    pub histograms: Vec<String>,
}

impl RunOutput {
    pub fn stat(&mut self, name: &'static str, value: f64, source: &str) {
        self.stats.push(Stat {
            name,
            value,
            stderr: None,
            source: source.to_string(),
        });
    }

    pub fn stat_se(&mut self, name: &'static str, value: f64, stderr: f64, source: &str) {
        self.stats.push(Stat {
            name,
            value,
            stderr: Some(stderr),
            source: source.to_string(),
        });
    }

    pub fn add_histogram(&mut self, table: Table) {
        self.histograms.push(table.name.clone());
        self.tables.push(table);
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| io_err(path, e))
}

/// Writes every table plus `report.json`, returning the written paths.
pub fn write_run(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    format: Format,
    run: &RunOutput,
    wall_time: f64,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut written = Vec::new();
    for t in &run.tables {
        let path = out_dir.join(t.file_name(format));
        write_file(&path, &t.render(format))?;
        written.push(path);
    }

    let file_of = |name: &str| -> String {
        run.tables
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.file_name(format))
            .unwrap_or_default()
    };
    let mut echo = Map::new();
    echo.insert("experiment".into(), json!(cfg.experiment.name()));
    echo.insert("mode".into(), json!(cfg.mode));
    for (k, v) in &cfg.params {
        echo.insert(k.clone(), json!(v));
    }
    let mut stats = Map::new();
    for s in &run.stats {
        let mut m = Map::new();
        m.insert("value".into(), json!(s.value));
        if let Some(se) = s.stderr {
            m.insert("stderr".into(), json!(se));
        }
        m.insert("source".into(), json!(file_of(&s.source)));
        stats.insert(s.name.into(), Value::Object(m));
    }
    let histograms: Vec<String> = run.histograms.iter().map(|h| file_of(h)).collect();
    let files: Vec<String> = run.tables.iter().map(|t| t.file_name(format)).collect();
    let report = json!({
        "config": echo,
        "seed": cfg.seed,
        "stats": stats,
        "histograms": histograms,
        "files": files,
        "wall_time_s": wall_time,
    });
    let path = out_dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_file(&path, &text)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_rendering() {
        let mut t = Table::new("s", &["i", "x", "who"]);
        t.push(vec![1usize.into(), 0.25.into(), "L".into()]);
        assert_eq!(t.render(Format::Csv), "i,x,who\n1,0.25,L\n");
        let v: Value = serde_json::from_str(&t.render(Format::Json)).unwrap();
        assert_eq!(v["rows"][0][1], json!(0.25));
        assert_eq!(v["columns"][2], json!("who"));
    }

    #[test]
    fn non_finite_numbers_become_null() {
        assert_eq!(Cell::Num(f64::NAN).json(), Value::Null);
    }
}
