//! Delimited-text artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

use sabra_core::ShellState;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";

/// Writes one row per snapshot: a leading index column, then
/// `x1_1, x1_2, ..., xM_2`. Values use the shortest round-trip format.
pub struct SnapshotWriter {
    out: BufWriter<File>,
    rows: usize,
}

impl SnapshotWriter {
    pub fn create(path: &Path, first_column: &str, shells: usize) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        write!(out, "{first_column}")?;
        for n in 1..=shells {
            write!(out, ",x{n}_1,x{n}_2")?;
        }
        writeln!(out)?;
        Ok(SnapshotWriter { out, rows: 0 })
    }

    pub fn row(&mut self, lead: f64, state: &ShellState) -> Result<()> {
        write!(self.out, "{lead}")?;
        for [x, y] in state.shells() {
            write!(self.out, ",{x},{y}")?;
        }
        writeln!(self.out)?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Appends a comment line marking the data as incomplete.
    pub fn truncate(mut self, reason: &str) -> Result<()> {
        writeln!(self.out, "# truncated: {}", reason.replace('\n', " "))?;
        self.finish()
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// A small CSV table with a fixed header.
pub struct Table {
    out: BufWriter<File>,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", header.join(","))?;
        Ok(Table { out })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<()> {
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Formats an optional number, leaving the cell empty for `None`.
pub fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}
