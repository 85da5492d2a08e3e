//! Scenario configuration: a TOML file of flat `[section]` tables.
//!
//! Every key has a default, except `gamma` in `[gas]`, which must be given
//! whenever a file is supplied. Reading never stops at the first problem: all
//! missing, mistyped, out-of-range and unknown keys are collected and reported
//! together.

use serde_json::{Map, Value};
use std::collections::BTreeSet;
use toml::Table;

/// All problems found in one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration:")?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// Admissible range for a numeric key.
#[derive(Debug, Clone, Copy)]
pub enum Range {
    Any,
    Positive,
    NonNegative,
    /// Open interval (lo, hi).
    Open(f64, f64),
    /// Half-open interval (lo, hi].
    OpenClosed(f64, f64),
}

impl Range {
    fn admits(self, x: f64) -> bool {
        x.is_finite()
            && match self {
                Range::Any => true,
                Range::Positive => x > 0.0,
                Range::NonNegative => x >= 0.0,
                Range::Open(lo, hi) => x > lo && x < hi,
                Range::OpenClosed(lo, hi) => x > lo && x <= hi,
            }
    }

    fn describe(self) -> String {
        match self {
            Range::Any => "finite".into(),
            Range::Positive => "positive".into(),
            Range::NonNegative => "non-negative".into(),
            Range::Open(lo, hi) => format!("in ({lo}, {hi})"),
            Range::OpenClosed(lo, hi) => format!("in ({lo}, {hi}]"),
        }
    }
}

/// Typed access to a parsed file, recording every value actually used.
pub struct Reader {
    root: Table,
    from_file: bool,
    problems: Vec<String>,
    resolved: Map<String, Value>,
    seen: BTreeSet<(String, String)>,
}

impl Reader {
    /// Parses `text`; `None` means "no file, all defaults".
    pub fn new(text: Option<&str>) -> Result<Self, ConfigError> {
        let (root, from_file) = match text {
            None => (Table::new(), false),
            Some(t) => (
                t.parse::<Table>().map_err(|e| ConfigError { problems: vec![format!("TOML syntax: {}", e.message())] })?,
                true,
            ),
        };
        let mut problems = Vec::new();
        for (k, v) in &root {
            if !v.is_table() {
                problems.push(format!("top-level key `{k}` must be a [section]"));
            }
        }
        Ok(Self { root, from_file, problems, resolved: Map::new(), seen: BTreeSet::new() })
    }

    pub fn from_file(&self) -> bool {
        self.from_file
    }

    fn raw(&mut self, section: &str, key: &str) -> Option<toml::Value> {
        self.seen.insert((section.to_string(), key.to_string()));
        self.root.get(section)?.as_table()?.get(key).cloned()
    }

    fn record(&mut self, section: &str, key: &str, v: Value) {
        let entry = self.resolved.entry(section.to_string()).or_insert_with(|| Value::Object(Map::new()));
        if let Value::Object(m) = entry {
            m.insert(key.to_string(), v);
        }
    }

    fn number(&mut self, section: &str, key: &str) -> Result<Option<f64>, ()> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(x)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(other) => {
                self.problems.push(format!("{section}.{key}: expected a number, found {}", other.type_str()));
                Err(())
            }
        }
    }

    fn check(&mut self, section: &str, key: &str, x: f64, range: Range) -> f64 {
        if !range.admits(x) {
            self.problems.push(format!("{section}.{key} = {x}: must be {}", range.describe()));
        }
        self.record(section, key, Value::from(x));
        x
    }

    /// A number with a default.
    pub fn f64(&mut self, section: &str, key: &str, default: f64, range: Range) -> f64 {
        match self.number(section, key) {
            Ok(Some(x)) => self.check(section, key, x, range),
            Ok(None) => self.check(section, key, default, range),
            Err(()) => default,
        }
    }

    /// A number that must be present when a file is given.
    pub fn required_f64(&mut self, section: &str, key: &str, default: f64, range: Range) -> f64 {
        match self.number(section, key) {
            Ok(Some(x)) => self.check(section, key, x, range),
            Ok(None) if self.from_file => {
                self.problems.push(format!("{section}.{key}: required key is missing"));
                default
            }
            Ok(None) => self.check(section, key, default, range),
            Err(()) => default,
        }
    }

    /// A count with a default, at least `min`.
    pub fn usize(&mut self, section: &str, key: &str, default: usize, min: usize) -> usize {
        let v = match self.raw(section, key) {
            None => default,
            Some(toml::Value::Integer(i)) if i >= 0 => i as usize,
            Some(other) => {
                self.problems.push(format!("{section}.{key}: expected a non-negative integer, found {other}"));
                return default;
            }
        };
        if v < min {
            self.problems.push(format!("{section}.{key} = {v}: must be at least {min}"));
        }
        self.record(section, key, Value::from(v));
        v
    }

    /// One of a fixed set of strings.
    pub fn choice(&mut self, section: &str, key: &str, default: &'static str, options: &[&'static str]) -> &'static str {
        let got = match self.raw(section, key) {
            None => default,
            Some(toml::Value::String(s)) => match options.iter().find(|o| **o == s) {
                Some(o) => o,
                None => {
                    self.problems.push(format!("{section}.{key} = \"{s}\": expected one of {}", options.join(", ")));
                    default
                }
            },
            Some(other) => {
                self.problems.push(format!("{section}.{key}: expected a string, found {}", other.type_str()));
                default
            }
        };
        self.record(section, key, Value::from(got));
        got
    }

    /// Reports a problem found while cross-checking values.
    pub fn reject(&mut self, msg: impl Into<String>) {
        self.problems.push(msg.into());
    }

    /// Fails if any problem was recorded or the file has keys nobody read.
    /// On success returns the resolved parameters, defaults included.
    pub fn finish(mut self) -> Result<Map<String, Value>, ConfigError> {
        for (name, sec) in &self.root {
            let Some(t) = sec.as_table() else { continue };
            for key in t.keys() {
                if !self.seen.contains(&(name.clone(), key.clone())) {
                    self.problems.push(format!("{name}.{key}: unknown key for this scenario"));
                }
            }
        }
        if self.problems.is_empty() {
            Ok(self.resolved)
        } else {
            Err(ConfigError { problems: self.problems })
        }
    }
}
