//! CSV tables and the run manifest.
//!
//! Floats are written in the shortest form that parses back to the same
//! `f64`, so identical runs give byte-identical files.

use serde::Serialize;
use std::fmt::Write as _;

/// Shortest round-trip decimal for finite values; `NaN`, `inf`, `-inf` otherwise.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        ryu::Buffer::new().format_finite(x).to_string()
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::S(s.to_string())
    }
}

/// A header plus rows, rendered with `,` separators and `\n` line ends.
pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { columns: header.len(), text: header.join(",") + "\n" }
    }

    /// Appends a row of numbers.
    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.columns, "row width");
        let cells: Vec<String> = row.iter().map(|x| fmt_f64(*x)).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    /// Appends a row of mixed cells. Strings must not contain separators.
    pub fn push_cells(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns, "row width");
        for (i, c) in row.into_iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::F(x) => self.text.push_str(&fmt_f64(x)),
                Cell::I(v) => {
                    let _ = write!(self.text, "{v}");
                }
                Cell::S(s) => {
                    debug_assert!(!s.contains([',', '\n', '"']));
                    self.text.push_str(&s);
                }
                Cell::Empty => {}
            }
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// One checked property of a run.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// The bound `value` was compared against, if any.
    pub bound: Option<f64>,
}

impl Check {
    /// `value < bound`.
    pub fn below(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), passed: value < bound, value, bound: Some(bound) }
    }

    /// `value > bound`.
    pub fn above(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), passed: value > bound, value, bound: Some(bound) }
    }

    pub fn flag(name: &str, passed: bool) -> Self {
        Self { name: name.into(), passed, value: if passed { 1.0 } else { 0.0 }, bound: None }
    }
}

/// Pass/fail of the background identity suite.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct IdentitySummary {
    pub passed: bool,
    pub max_abs_k1: f64,
    pub key2_max_rel: f64,
    pub key3_max_rel: f64,
    pub key2_min: f64,
    pub key3_min: f64,
}

/// Written as `manifest.json` next to every run's artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub kind: String,
    pub version: String,
    pub config: Option<String>,
    pub grid_scale: f64,
    pub tol_scale: f64,
    pub parameters: serde_json::Map<String, serde_json::Value>,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub identity_suite: Option<IdentitySummary>,
    pub invariants: Vec<Check>,
    pub artifacts: Vec<String>,
}
