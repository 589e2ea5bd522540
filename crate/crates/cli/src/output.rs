//! CSV artifacts and the JSON run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

/// Shortest decimal form that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

#[derive(Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub command: &'a str,
    pub config: &'a C,
    pub seed: u64,
    pub artifacts: Vec<PathBuf>,
    pub duration_s: f64,
    pub summary: serde_json::Value,
}

impl<C: Serialize> RunManifest<'_, C> {
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(&path, body + "\n")?;
        Ok(path)
    }
}

pub fn seconds(d: Duration) -> f64 {
    d.as_secs_f64()
}
