use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Output of one command: the effective configuration, the result, and the
/// rows written in CSV mode.
pub struct Report {
    pub config: Value,
    pub result: Value,
    pub rows: Vec<Map<String, Value>>,
}

impl Report {
    /// A single CSV row flattened from the whole result.
    pub fn single(config: impl Serialize, result: impl Serialize) -> Result<Self, CliError> {
        let result = to_value(result)?;
        let mut row = Map::new();
        flatten("", &result, &mut row);
        Ok(Report {
            config: to_value(config)?,
            result,
            rows: vec![row],
        })
    }
}

pub fn to_value(v: impl Serialize) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(CliError::compute)
}

/// Nested objects become `a.b`, arrays `a.0`, `a.1`, ...
pub fn flatten(prefix: &str, v: &Value, out: &mut Map<String, Value>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn render(report: &Report, format: Format, runtime_s: f64) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => {
            let mut top = Map::new();
            top.insert("config".into(), report.config.clone());
            top.insert("result".into(), report.result.clone());
            top.insert("runtime_s".into(), Value::from(runtime_s));
            let mut out =
                serde_json::to_vec_pretty(&Value::Object(top)).map_err(CliError::compute)?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut header: Vec<String> = Vec::new();
            for row in &report.rows {
                for k in row.keys() {
                    if !header.contains(k) {
                        header.push(k.clone());
                    }
                }
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header).map_err(CliError::compute)?;
            for row in &report.rows {
                w.write_record(
                    header
                        .iter()
                        .map(|k| row.get(k).map(cell).unwrap_or_default()),
                )
                .map_err(CliError::compute)?;
            }
            w.into_inner().map_err(|e| CliError::compute(e.error()))
        }
    }
}

pub fn emit(bytes: &[u8], output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(p) => std::fs::write(p, bytes)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Io(format!("cannot write to stdout: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flatten_names_nested_fields() {
        let mut out = Map::new();
        flatten("", &json!({"a": {"b": 1}, "c": [2, {"d": null}]}), &mut out);
        let keys: Vec<&str> = out.keys().map(String::as_str).collect();
        assert_eq!(keys, ["a.b", "c.0", "c.1.d"]);
    }

    #[test]
    fn csv_has_one_header_and_quotes_commas() {
        let r = Report::single(json!({}), json!({"name": "a,b", "x": 1.5})).unwrap();
        let text = String::from_utf8(render(&r, Format::Csv, 0.0).unwrap()).unwrap();
        assert_eq!(text, "name,x\n\"a,b\",1.5\n");
    }

    #[test]
    fn json_has_three_keys() {
        let r = Report::single(json!({"seed": 1}), json!({"x": 1})).unwrap();
        let v: Value = serde_json::from_slice(&render(&r, Format::Json, 0.25).unwrap()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["config", "result", "runtime_s"]);
    }
}
