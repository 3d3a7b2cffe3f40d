//! Scenario reports: verdicts, measured quantities and written files.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub scenario: String,
    pub config_hash: String,
    pub verdicts: BTreeMap<String, bool>,
    pub quantities: Map<String, Value>,
    pub files: Vec<String>,
}

/// Hex SHA-256 of the config text and any overrides.
pub fn config_hash(text: &str, overrides: &[(&str, String)]) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    for (k, v) in overrides {
        h.update(format!("\n{k}={v}").as_bytes());
    }
    hex::encode(h.finalize())
}

impl Report {
    pub fn new(scenario: &str, config_hash: String) -> Self {
        Self {
            scenario: scenario.to_string(),
            config_hash,
            ..Self::default()
        }
    }

    pub fn verdict(&mut self, name: &str, pass: bool) {
        self.verdicts.insert(name.to_string(), pass);
    }

    /// Stores a number; non-finite values become strings so the JSON stays valid.
    pub fn num(&mut self, name: &str, v: f64) {
        self.set(name, number(v));
    }

    pub fn set(&mut self, name: &str, v: Value) {
        self.quantities.insert(name.to_string(), v);
    }

    pub fn file(&mut self, path: &Path) {
        self.files.push(path.display().to_string());
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.values().all(|&v| v)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "scenario": self.scenario,
            "config_hash": self.config_hash,
            "verdicts": self.verdicts,
            "all_pass": self.all_pass(),
            "quantities": self.quantities,
            "files": self.files,
        })
    }

    pub fn to_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("report serializes")
    }

    pub fn write(&mut self, dir: &Path) -> Result<()> {
        let path = dir.join("report.json");
        self.file(&path);
        std::fs::write(&path, self.to_pretty() + "\n")?;
        Ok(())
    }
}

pub fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or_else(|| Value::String(format!("{v}")), Value::Number)
}

pub fn numbers(vs: &[f64]) -> Value {
    Value::Array(vs.iter().map(|v| number(*v)).collect())
}
