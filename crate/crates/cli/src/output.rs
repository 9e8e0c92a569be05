//! Result files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use micromacro::io::Table;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), String> {
    fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

/// Writes every table and the reproducing `config.toml`, then the manifest
/// through a temporary file renamed into place, so a manifest only exists
/// for complete runs.
pub fn emit_results(out: &Path, cfg: &RunConfig, tables: &[(&str, Table)], threads: usize, elapsed: Duration) -> Result<PathBuf, String> {
    fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let manifest_path = out.join("manifest.json");
    // A stale manifest must not describe the new files.
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| format!("{}: {e}", manifest_path.display()))?;
    }
    let mut files: Vec<(String, Vec<u8>)> = tables.iter().map(|(name, t)| (name.to_string(), t.to_csv().into_bytes())).collect();
    files.push(("config.toml".into(), cfg.to_toml().into_bytes()));
    let mut entries = Vec::new();
    for (name, bytes) in &files {
        write(&out.join(name), bytes)?;
        entries.push(serde_json::json!({
            "file": name,
            "bytes": bytes.len(),
            "sha256": sha256_hex(bytes),
        }));
    }
    let manifest = serde_json::json!({
        "artifact": "micromacro",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command,
        "config": cfg.to_json(),
        "threads": threads,
        "duration_seconds": elapsed.as_secs_f64(),
        "outputs": entries,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest is plain JSON") + "\n";
    let tmp = out.join("manifest.json.tmp");
    write(&tmp, text.as_bytes())?;
    fs::rename(&tmp, &manifest_path).map_err(|e| format!("{}: {e}", manifest_path.display()))?;
    Ok(manifest_path)
}
