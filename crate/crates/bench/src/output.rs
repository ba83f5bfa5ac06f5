//! Output tables. Every file has a header row and LF line endings; reals in
//! CSV files carry 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use cvcim::instances::format_real;
use serde::{Deserialize, Serialize};

/// Gap thresholds tracked per run.
pub const REACH_THRESHOLDS: [f64; 2] = [1e-2, 1e-3];

/// One trajectory's outcome, one line of `runs.jsonl`.
///
/// Wall time lives in `timing.csv` so this file stays byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub policy: String,
    pub sample: usize,
    pub seed: u64,
    pub diverged_at: Option<usize>,
    pub best_gap: Option<f64>,
    pub final_gap: Option<f64>,
    pub first_reach_1e2: Option<usize>,
    pub first_reach_1e3: Option<usize>,
}

pub fn real(v: f64) -> String {
    format_real(v)
}

pub fn opt_real(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

pub fn opt_int(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Accumulates CSV rows.
#[derive(Debug, Clone)]
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(c.as_ref());
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn runs_jsonl(records: &[RunRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(r)?;
        writeln!(out, "{line}").expect("writing to a String");
    }
    Ok(out)
}

pub fn read_runs_jsonl(text: &str) -> Result<Vec<RunRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("runs.jsonl line {}", i + 1)))
        .collect()
}

/// Splits one CSV line. Cells never contain commas or quotes here.
pub fn cells(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

pub fn parse_real(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        "nan" => Ok(f64::NAN),
        _ => s.parse().with_context(|| format!("bad number `{s}`")),
    }
}
