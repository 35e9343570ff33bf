//! CSV emission. Each file starts with `#` comment lines carrying the run
//! metadata and column units, then one header row, then the data. Reals are
//! written in scientific notation with 17 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::cache::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
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

pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Provenance stamped into every file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub label: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    /// `(column, unit)` pairs.
    pub columns: Vec<(&'static str, &'static str)>,
    pub notes: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[(&'static str, &'static str)]) -> Self {
        Self { name, columns: columns.to_vec(), notes: Vec::new(), rows: Vec::new() }
    }

    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn render(&self, meta: &RunMeta) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# generator: ksm {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# run: {}", meta.label);
        let _ = writeln!(s, "# config_hash: {}", meta.config_hash);
        let _ = writeln!(s, "# seed: {}", meta.seed);
        for n in &self.notes {
            let _ = writeln!(s, "# note: {n}");
        }
        let units: Vec<String> = self.columns.iter().map(|(c, u)| format!("{c} [{u}]")).collect();
        let _ = writeln!(s, "# units: {}", units.join(", "));
        let header: Vec<&str> = self.columns.iter().map(|c| c.0).collect();
        let _ = writeln!(s, "{}", header.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Real(v) => format_real(*v),
                    Cell::Int(v) => v.to_string(),
                    Cell::Text(t) => t.clone(),
                })
                .collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn write(&self, dir: &Path, meta: &RunMeta) -> std::io::Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        write_atomic(&path, self.render(meta).as_bytes())?;
        log::info!("wrote {} ({} rows)", path.display(), self.rows.len());
        Ok(path)
    }
}
