//! CSV and JSON emission. Every file carries the tool version and config hash.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|x| num(*x)).collect());
    }

    pub fn to_csv(&self, meta: &Meta, seed: u64) -> String {
        let mut s = format!(
            "# rydq {} config {} seed {}\n{}\n",
            meta.version,
            meta.config_hash,
            seed,
            self.columns.join(",")
        );
        for row in &self.rows {
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Integers without a fraction, otherwise the shortest round-trip form
/// (scientific for very small or large magnitudes).
pub fn num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Meta {
    pub version: String,
    pub config_hash: String,
}

/// Output of one target: plot-ready tables, scalar results and headline
/// numbers for the run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub target: String,
    pub seed: u64,
    pub tables: Vec<Table>,
    pub results: Value,
    pub headline: BTreeMap<String, f64>,
}

impl Artifact {
    pub fn new(target: &str, seed: u64) -> Self {
        Self {
            target: target.to_string(),
            seed,
            tables: Vec::new(),
            results: Value::Null,
            headline: BTreeMap::new(),
        }
    }

    pub fn headline(&mut self, key: &str, value: f64) {
        self.headline.insert(key.to_string(), value);
    }

    pub fn summary_json(&self, meta: &Meta) -> Value {
        json!({
            "target": self.target,
            "seed": self.seed,
            "version": meta.version,
            "config_hash": meta.config_hash,
            "headline": self.headline,
            "results": self.results,
        })
    }

    /// Writes `<dir>/<target>/<table>.csv` and `<dir>/<target>/summary.json`.
    pub fn write(&self, dir: &Path, meta: &Meta) -> io::Result<()> {
        let sub = dir.join(&self.target);
        std::fs::create_dir_all(&sub)?;
        for t in &self.tables {
            std::fs::write(sub.join(format!("{}.csv", t.name)), t.to_csv(meta, self.seed))?;
        }
        write_json(&sub.join("summary.json"), &self.summary_json(meta))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

pub fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let mut t = Table::new("curve", &["x", "y"]);
        t.push_nums(&[0.5, 2.0]);
        let meta = Meta {
            version: "9.9.9".into(),
            config_hash: "abc".into(),
        };
        assert_eq!(
            t.to_csv(&meta, 4),
            "# rydq 9.9.9 config abc seed 4\nx,y\n0.5,2\n"
        );
    }
}
