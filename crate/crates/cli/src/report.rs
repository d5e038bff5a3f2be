//! Deterministic report and data-file writers.
//!
//! Every float is printed with 17 significant digits so regression
//! comparisons are bit-faithful, and JSON objects use sorted keys.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// 17-significant-digit decimal form of a float.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

/// JSON value carrying the decimal form (string) to keep 17 digits exactly.
pub fn json_f64(v: f64) -> Value {
    if v.is_finite() {
        // serde_json prints f64 shortest-roundtrip, which is bit-faithful.
        json!(v)
    } else {
        Value::String(fmt_f64(v))
    }
}

pub struct RunWriter {
    out_dir: PathBuf,
    experiment: String,
    config_sha256: String,
    seed: u64,
}

impl RunWriter {
    /// Create the output directory, write `config.resolved.json`, and hash it.
    pub fn new(out_dir: &str, experiment: &str, resolved_config_json: &str, seed: u64) -> Result<Self> {
        let dir = PathBuf::from(out_dir);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let cfg_path = dir.join("config.resolved.json");
        fs::write(&cfg_path, resolved_config_json.as_bytes())?;
        let mut hasher = Sha256::new();
        hasher.update(resolved_config_json.as_bytes());
        let hash = format!("{:x}", hasher.finalize());
        Ok(Self {
            out_dir: dir,
            experiment: experiment.to_string(),
            config_sha256: hash,
            seed,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Write `report.json` with the standard envelope plus `body` fields.
    pub fn write_report(&self, body: Map<String, Value>) -> Result<()> {
        let mut root = Map::new();
        root.insert("tool".into(), json!("sgdlab"));
        root.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        root.insert("experiment".into(), json!(self.experiment));
        root.insert("config_sha256".into(), json!(self.config_sha256));
        root.insert("seed".into(), json!(self.seed));
        for (k, v) in body {
            root.insert(k, v);
        }
        // BTreeMap-backed objects give sorted keys, hence deterministic bytes.
        let sorted: std::collections::BTreeMap<String, Value> = root.into_iter().collect();
        let text = serde_json::to_string_pretty(&sorted)?;
        fs::write(self.path("report.json"), text.as_bytes())?;
        Ok(())
    }

    /// Write a CSV file with hand-formatted 17-digit floats.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        for row in rows {
            let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            buf.push_str(&line.join(","));
            buf.push('\n');
        }
        fs::write(self.path(name), buf.as_bytes())?;
        Ok(())
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut f = fs::File::create(self.path(name))?;
        f.write_all(bytes)?;
        Ok(())
    }
}

/// One verdict line of a report: a named claim with its outcome.
pub fn verdict(name: &str, ok: bool, detail: &str) -> Value {
    json!({
        "claim": name,
        "status": if ok { "satisfied" } else { "failed" },
        "detail": detail,
    })
}
