//! Deterministic CSV and JSON emission.

use serde::Serialize;
use std::path::Path;

use qnls::{QnlsError, Result, C64};

fn io_err(path: &Path, e: impl std::fmt::Display) -> QnlsError {
    QnlsError::Config(format!("cannot write {}: {e}", path.display()))
}

/// A real number with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Real and imaginary parts as two cells.
pub fn cplx(z: C64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

/// Row-oriented CSV table with a header.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(&self.header).map_err(|e| io_err(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}
