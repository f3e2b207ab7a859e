use std::fmt::Write;
use std::str::FromStr;

use serde_json::{Map, Number, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Val {
    F(f64),
    I(i64),
    S(String),
    B(bool),
}

impl From<f64> for Val {
    fn from(v: f64) -> Self {
        Val::F(v)
    }
}

impl From<i64> for Val {
    fn from(v: i64) -> Self {
        Val::I(v)
    }
}

impl From<usize> for Val {
    fn from(v: usize) -> Self {
        Val::I(v as i64)
    }
}

impl From<i32> for Val {
    fn from(v: i32) -> Self {
        Val::I(v as i64)
    }
}

impl From<bool> for Val {
    fn from(v: bool) -> Self {
        Val::B(v)
    }
}

impl From<&str> for Val {
    fn from(v: &str) -> Self {
        Val::S(v.to_string())
    }
}

/// Seventeen significant digits, `.` as decimal separator.
pub fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl Val {
    fn csv(&self) -> String {
        match self {
            Val::F(v) => float(*v),
            Val::I(v) => v.to_string(),
            Val::S(s) => s.clone(),
            Val::B(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Val::F(v) if v.is_finite() => Value::Number(Number::from_str(&float(*v)).unwrap()),
            Val::F(_) => Value::Null,
            Val::I(v) => Value::from(*v),
            Val::S(s) => Value::from(s.as_str()),
            Val::B(b) => Value::from(*b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Key in JSON output.
    pub name: String,
    /// Comment line preceding the table in CSV output; omitted when empty.
    pub label: String,
    pub columns: Vec<String>,
    pub header_row: bool,
    pub rows: Vec<Vec<Val>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            label: String::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            header_row: true,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Val>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn json(&self) -> Value {
        let mut obj = Map::new();
        for (c, name) in self.columns.iter().enumerate() {
            obj.insert(
                name.clone(),
                Value::Array(self.rows.iter().map(|r| r[c].json()).collect()),
            );
        }
        Value::Object(obj)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub meta: Vec<(String, Val)>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn meta(&mut self, key: &str, v: impl Into<Val>) {
        self.meta.push((key.to_string(), v.into()));
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.csv(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json()).unwrap();
                s.push('\n');
                s
            }
        }
    }

    fn csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            writeln!(s, "# {k} = {}", v.csv()).unwrap();
        }
        for t in &self.tables {
            if !t.label.is_empty() {
                writeln!(s, "# {}", t.label).unwrap();
            }
            if t.header_row {
                writeln!(s, "{}", t.columns.join(",")).unwrap();
            }
            for r in &t.rows {
                let cells: Vec<String> = r.iter().map(Val::csv).collect();
                writeln!(s, "{}", cells.join(",")).unwrap();
            }
        }
        s
    }

    fn json(&self) -> Value {
        let mut obj = Map::new();
        for (k, v) in &self.meta {
            obj.insert(k.clone(), v.json());
        }
        if let [only] = self.tables.as_slice() {
            if let Value::Object(cols) = only.json() {
                obj.extend(cols);
            }
        } else {
            for t in &self.tables {
                obj.insert(t.name.clone(), t.json());
            }
        }
        Value::Object(obj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_digits() {
        assert_eq!(float(std::f64::consts::SQRT_2), "1.4142135623730951e0");
        assert_eq!(float(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(float(-2.5e-300), "-2.5000000000000000e-300");
    }

    #[test]
    fn single_table_flattens_into_json() {
        let mut r = Report::default();
        r.meta("order", 2usize);
        let mut t = Table::new("filters", &["n", "h"]);
        t.push(vec![0usize.into(), 0.5.into()]);
        r.tables.push(t);
        let v: Value = serde_json::from_str(&r.render(Format::Json)).unwrap();
        assert_eq!(v["order"], 2);
        assert_eq!(v["h"][0].as_f64(), Some(0.5));
        assert_eq!(
            r.render(Format::Csv),
            "# order = 2\nn,h\n0,5.0000000000000000e-1\n"
        );
    }
}
