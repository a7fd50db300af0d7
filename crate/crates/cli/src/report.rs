//! Tabular results written as CSV or JSON with a provenance header.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    /// value and number of decimals
    Num(f64, usize),
    Text(String),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v, _) if !v.is_finite() => "nan".into(),
            Cell::Num(v, d) => format!("{v:.d$}"),
            Cell::Text(s) => s.clone(),
        }
    }

    /// The JSON value is parsed back from the CSV text so both formats carry
    /// the same digits.
    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Num(v, _) if !v.is_finite() => Value::Null,
            Cell::Num(..) => {
                let x: f64 = self.csv().parse().expect("formatted float parses");
                json!(x)
            }
            Cell::Text(s) => json!(s),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// trailing `key=value` lines
    pub notes: Vec<String>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    /// Hashes the command, the effective parameters and every input's bytes.
    pub fn new(command: &'static str, seed: u64, params: &Value, inputs: &[(&str, &[u8])]) -> Self {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0]);
        h.update(params.to_string().as_bytes());
        for (name, bytes) in inputs {
            h.update([0]);
            h.update(name.as_bytes());
            h.update([0]);
            h.update(Sha256::digest(bytes));
        }
        Self { command, seed, config_hash: hex::encode(h.finalize()) }
    }

    fn header(&self) -> String {
        format!("# hmg {} seed={} config_sha256={}", self.command, self.seed, self.config_hash)
    }
}

pub fn render(table: &Table, prov: &Provenance, format: Format) -> String {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
            w.write_record(&table.columns).expect("in-memory write");
            for row in &table.rows {
                w.write_record(row.iter().map(Cell::csv)).expect("in-memory write");
            }
            let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
            let mut out = prov.header();
            out.push('\n');
            out.push_str(&body);
            for n in &table.notes {
                out.push_str(&format!("# {n}\n"));
            }
            out
        }
        Format::Json => {
            let rows: Vec<Value> = table.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
            let doc = json!({
                "command": prov.command,
                "seed": prov.seed,
                "config_sha256": prov.config_hash,
                "columns": table.columns,
                "rows": rows,
                "notes": table.notes,
            });
            serde_json::to_string_pretty(&doc).expect("json") + "\n"
        }
    }
}

pub fn write(dir: &Path, stem: &str, table: &Table, prov: &Provenance, format: Format) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(format!("{stem}.{}", format.extension()));
    fs::write(&path, render(table, prov, format)).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance::new("test", 7, &json!({"a": 1}), &[("input", b"abc")])
    }

    #[test]
    fn csv_has_header_comment_and_fixed_precision() {
        let mut t = Table::new(["hour", "p_kw", "tag"]);
        t.push(vec![Cell::Int(1), Cell::Num(2.0 / 3.0, 3), Cell::text("a,b")]);
        t.notes.push("total=1".into());
        let s = render(&t, &prov(), Format::Csv);
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# hmg test seed=7 config_sha256="));
        assert_eq!(lines[1], "hour,p_kw,tag");
        assert_eq!(lines[2], "1,0.667,\"a,b\"");
        assert_eq!(lines[3], "# total=1");
    }

    #[test]
    fn json_carries_the_rounded_values() {
        let mut t = Table::new(["x"]);
        t.push(vec![Cell::Num(1.23456, 2)]);
        let v: Value = serde_json::from_str(&render(&t, &prov(), Format::Json)).unwrap();
        assert_eq!(v["rows"][0][0], json!(1.23));
        assert_eq!(v["seed"], json!(7));
    }

    #[test]
    fn hash_depends_on_inputs() {
        let a = Provenance::new("x", 1, &json!({}), &[("in", b"1")]);
        let b = Provenance::new("x", 1, &json!({}), &[("in", b"2")]);
        let c = Provenance::new("x", 9, &json!({}), &[("in", b"1")]);
        assert_ne!(a.config_hash, b.config_hash);
        assert_eq!(a.config_hash, c.config_hash);
    }
}
