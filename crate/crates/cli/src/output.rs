//! Plain and JSON rendering of command results.
//!
//! Numbers are printed with the shortest representation that parses back to
//! the same `f64`, in both formats.

use std::fmt::Write as _;

use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    /// Named scalars, one `name value` line each.
    Fields(Vec<(String, Value)>),
    /// Rows under a header; CSV in plain mode.
    Table { columns: Vec<String>, rows: Vec<Vec<Value>> },
}

impl Output {
    pub fn fields<const N: usize>(pairs: [(&str, f64); N]) -> Self {
        Output::Fields(pairs.iter().map(|(k, v)| (k.to_string(), num(*v))).collect())
    }

    pub fn render(&self, json: bool) -> String {
        if json {
            let v = match self {
                Output::Fields(f) => Value::Object(f.iter().cloned().collect::<Map<_, _>>()),
                Output::Table { columns, rows } => serde_json::json!({ "columns": columns, "rows": rows }),
            };
            return format!("{v}\n");
        }
        let mut s = String::new();
        match self {
            Output::Fields(f) => {
                for (k, v) in f {
                    let _ = writeln!(s, "{k} {}", plain(v));
                }
            }
            Output::Table { columns, rows } => {
                let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
                let _ = w.write_record(columns);
                for r in rows {
                    let _ = w.write_record(r.iter().map(plain));
                }
                s = String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default();
            }
        }
        s
    }
}

/// JSON number, or null for non-finite values.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

/// Shortest round-trip form, with exponents for very large or small values.
pub fn fmt_f64(v: f64) -> String {
    let s = format!("{v:?}");
    match s.strip_suffix(".0") {
        Some(t) => t.to_string(),
        None => s,
    }
}

pub fn plain(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map(fmt_f64).unwrap_or_else(|| n.to_string()),
        Value::String(s) => s.clone(),
        Value::Null => "NaN".into(),
        other => other.to_string(),
    }
}
