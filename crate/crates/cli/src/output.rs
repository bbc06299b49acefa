//! JSON envelope and CSV rendering.

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// JSON number rounded to 12 significant digits; non-finite values become null.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(round12(x))
    } else {
        Value::Null
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| num(*x)).collect())
}

/// One CSV cell.
#[derive(Debug, Clone)]
pub enum Field {
    Num(f64),
    Int(usize),
    Text(String),
    Bool(bool),
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Num(x) if x.is_nan() => "nan".into(),
            Field::Num(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Field::Num(x) => {
                let r = round12(*x);
                if r == 0.0 || (1e-4..1e15).contains(&r.abs()) {
                    r.to_string()
                } else {
                    format!("{r:e}")
                }
            }
            Field::Int(i) => i.to_string(),
            Field::Text(s) => s.clone(),
            Field::Bool(b) => b.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// A finished command: the JSON results and the equivalent CSV table.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub config: Value,
    pub results: Value,
    pub table: Table,
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let doc = json!({
                    "schema_version": SCHEMA_VERSION,
                    "command": self.command,
                    "config_echo": self.config,
                    "results": self.results,
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("JSON values serialize");
                s.push('\n');
                s
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.table.header).expect("in-memory write");
                for row in &self.table.rows {
                    w.write_record(row.iter().map(Field::render)).expect("in-memory write");
                }
                String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round12(1.05), 1.05);
        assert_eq!(round12(0.1 + 0.2), 0.3);
        assert_eq!(round12(1.234_567_890_123_456), 1.234_567_890_12);
        assert_eq!(round12(-0.0), -0.0);
        assert_eq!(num(f64::NEG_INFINITY), Value::Null);
    }

    #[test]
    fn csv_renders_infinities() {
        let mut t = Table::new(&["x", "flag"]);
        t.push(vec![Field::Num(f64::NEG_INFINITY), Field::Bool(true)]);
        t.push(vec![Field::Num(4.440_892_098_500_626e-16), Field::Bool(false)]);
        let r = Report {
            command: "t",
            config: Value::Null,
            results: Value::Null,
            table: t,
        };
        assert_eq!(r.render(Format::Csv), "x,flag\n-inf,true\n4.4408920985e-16,false\n");
    }
}
