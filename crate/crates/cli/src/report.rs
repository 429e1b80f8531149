//! JSON reports. Field order is fixed by the structs, so identical inputs give identical bytes.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub inputs: Inputs,
    pub seed: u64,
    pub result: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct Inputs {
    pub case: String,
    pub devices: String,
}

#[derive(Debug, Serialize)]
pub struct NamedState {
    pub names: Vec<String>,
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn render<T: Serialize>(report: &Report<T>) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Writes to `path`, or stdout when None.
pub fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_version_leads_the_document() {
        let r = Report {
            schema_version: SCHEMA_VERSION,
            command: "x".into(),
            inputs: Inputs { case: "a".into(), devices: "b".into() },
            seed: 0,
            result: 1.5,
        };
        let text = render(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert!(text.trim_start().starts_with("{\n  \"schema_version\": 1,"));
    }
}
