//! Report files: the summary CSV, detail tables, the resolved config and a
//! manifest.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use stark_core::intertwining::export_experiment_csv;
use stark_core::{par, Error, Result};

use crate::config::ExperimentConfig;
use crate::run::{Report, Subcommand};

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    /// See [`config_hash`].
    pub config_sha256: String,
    pub seed: u64,
    pub stark_version: String,
    pub parallel: bool,
    pub pass: bool,
    pub files: Vec<String>,
    pub created_unix: u64,
}

/// SHA-256 of the canonical TOML of `cfg`, with the output directory blanked
/// so that the hash names the experiment rather than where it was written.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output.clear();
    format!("{:x}", Sha256::digest(c.to_toml().as_bytes()))
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Validation(format!("{}: {e}", path.display()))
}

/// Write `<sub>.csv`, the detail tables, `config.toml` and `manifest.json`
/// into `dir`.
pub fn write_report(dir: &Path, cmd: Subcommand, cfg: &ExperimentConfig, report: &Report) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut files = Vec::new();
    let mut put = |name: String, body: &[u8]| -> Result<()> {
        let path = dir.join(&name);
        std::fs::write(&path, body).map_err(|e| io(&path, e))?;
        files.push(name);
        Ok(())
    };
    let mut summary = Vec::new();
    export_experiment_csv(&report.rows, &mut summary)?;
    put(format!("{}.csv", cmd.name()), &summary)?;
    for (name, body) in &report.details {
        put(name.clone(), body)?;
    }
    put("config.toml".into(), cfg.to_toml().as_bytes())?;
    let manifest = Manifest {
        subcommand: cmd.name().into(),
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        stark_version: env!("CARGO_PKG_VERSION").into(),
        parallel: par::is_parallel(),
        pass: report.pass(),
        files,
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(&path, json).map_err(|e| io(&path, e))?;
    Ok(manifest)
}
