//! CSV report plus JSON manifest for a finished study.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<C: Serialize> {
    pub schema_version: u32,
    pub kind: String,
    pub crate_version: &'static str,
    pub master_seed: u64,
    /// How replication seeds derive from the master seed.
    pub seed_rule: &'static str,
    pub config: C,
    pub flagged_cells: Vec<String>,
    /// Study-specific findings, e.g. the floor sweep's uniform check.
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
    pub runtime_secs: f64,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(kind: &str, master_seed: u64, config: C) -> Self {
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            kind: kind.to_string(),
            crate_version: env!("CARGO_PKG_VERSION"),
            master_seed,
            seed_rule: "replication r uses derive(derive(master_seed, 5), r)",
            config,
            flagged_cells: Vec::new(),
            summary: serde_json::Value::Null,
            runtime_secs: 0.0,
        }
    }
}

/// Writes `<dir>/<kind>.csv` and `<dir>/manifest.json`. Runtime lives only
/// in the manifest so the CSV is reproducible byte for byte.
pub fn write_outputs<C: Serialize>(dir: &Path, csv: &str, manifest: &Manifest<C>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{}.csv", manifest.kind)), csv)?;
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}
