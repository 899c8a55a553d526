//! Key/value records rendered as aligned text, JSON or CSV.

use clap::ValueEnum;
use serde_json::{Map, Value as Json};

use semibiv::validity::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone)]
pub enum Value {
    Num(f64),
    Text(String),
    Bool(bool),
    Missing,
}

impl Value {
    fn text(&self) -> String {
        match self {
            Value::Num(x) => fmt_num(*x),
            Value::Text(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
            Value::Missing => "-".into(),
        }
    }

    fn json(&self) -> Json {
        match self {
            // Round through the 12-digit text so every format agrees.
            Value::Num(x) if x.is_finite() => fmt_num(*x)
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map_or(Json::Null, Json::Number),
            Value::Num(x) => Json::String(x.to_string()),
            Value::Text(s) => Json::String(s.clone()),
            Value::Bool(b) => Json::Bool(*b),
            Value::Missing => Json::Null,
        }
    }
}

/// Ordered list of named values.
#[derive(Debug, Default)]
pub struct Record {
    fields: Vec<(&'static str, Value)>,
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(mut self, key: &'static str, x: f64) -> Self {
        self.fields.push((key, Value::Num(x)));
        self
    }

    pub fn text(mut self, key: &'static str, s: impl Into<String>) -> Self {
        self.fields.push((key, Value::Text(s.into())));
        self
    }

    pub fn flag(mut self, key: &'static str, b: bool) -> Self {
        self.fields.push((key, Value::Bool(b)));
        self
    }

    pub fn opt(mut self, key: &'static str, x: Option<f64>) -> Self {
        self.fields.push((key, x.map_or(Value::Missing, Value::Num)));
        self
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Table => {
                let width = self.fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
                self.fields
                    .iter()
                    .map(|(k, v)| format!("{k:<width$}  {}\n", v.text()))
                    .collect()
            }
            Format::Json => {
                let map: Map<String, Json> = self.fields.iter().map(|(k, v)| (k.to_string(), v.json())).collect();
                let mut s = serde_json::to_string_pretty(&Json::Object(map)).unwrap_or_default();
                s.push('\n');
                s
            }
            Format::Csv => {
                let header: Vec<String> = self.fields.iter().map(|(k, _)| csv_field(k)).collect();
                let row: Vec<String> = self
                    .fields
                    .iter()
                    .map(|(_, v)| match v {
                        Value::Missing => String::new(),
                        v => csv_field(&v.text()),
                    })
                    .collect();
                format!("{}\n{}\n", header.join(","), row.join(","))
            }
        }
    }
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_agree() {
        let r = Record::new().num("p", 1.0 / 3.0).text("w", "(1, 2]").flag("ok", true).opt("d", None);
        assert_eq!(r.render(Format::Table), "p   3.33333333333e-1\nw   (1, 2]\nok  true\nd   -\n");
        assert_eq!(r.render(Format::Csv), "p,w,ok,d\n3.33333333333e-1,\"(1, 2]\",true,\n");
        let j: Json = serde_json::from_str(&r.render(Format::Json)).unwrap();
        assert_eq!(j["p"].as_f64(), Some(0.333333333333));
        assert!(j["d"].is_null());
    }
}
