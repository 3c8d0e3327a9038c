use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, WorkbenchConfig};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: BTreeMap<String, Entry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub sha256: String,
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
}

pub fn config_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join("configs").join(format!("{hash}.json"))
}

fn load(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(Manifest::default());
    }
    serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Hashes the listed files (relative to the output directory) and records
/// them, together with a copy of the configuration that produced them.
pub fn record(cfg: &WorkbenchConfig, command: &str, files: &[&str]) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    let hash = cfg.hash();
    let cpath = config_path(dir, &hash);
    fs::create_dir_all(cpath.parent().expect("configs dir"))?;
    fs::write(&cpath, serde_json::to_string(cfg).expect("config serialises"))?;
    let mut manifest = load(dir)?;
    for f in files {
        let bytes = fs::read(dir.join(f))?;
        manifest.files.insert(
            (*f).to_owned(),
            Entry { sha256: sha256_hex(&bytes), config_hash: hash.clone(), seed: cfg.seed, command: command.to_owned() },
        );
    }
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest).expect("manifest serialises"))?;
    Ok(())
}

/// One line per recorded file; the error lists every mismatch.
pub fn verify(dir: &Path) -> Result<Vec<String>, CliError> {
    if !dir.join(MANIFEST).exists() {
        return Err(CliError::Data(format!("no {MANIFEST} in {}", dir.display())));
    }
    let manifest = load(dir)?;
    let mut lines = Vec::new();
    let mut problems = Vec::new();
    for (name, e) in &manifest.files {
        match fs::read(dir.join(name)) {
            Ok(bytes) if sha256_hex(&bytes) == e.sha256 => {}
            Ok(_) => problems.push(format!("{name}: content hash differs from the manifest")),
            Err(err) => problems.push(format!("{name}: {err}")),
        }
        match fs::read_to_string(config_path(dir, &e.config_hash)) {
            Ok(text) => match serde_json::from_str::<WorkbenchConfig>(&text) {
                Ok(c) if c.hash() == e.config_hash => {}
                _ => problems.push(format!("{name}: stored config does not hash to {}", e.config_hash)),
            },
            Err(_) => problems.push(format!("{name}: config {} is missing", e.config_hash)),
        }
        lines.push(format!("{name:<40} {}  config {}  seed {}  ({})", &e.sha256[..16], &e.config_hash[..16], e.seed, e.command));
    }
    if problems.is_empty() {
        Ok(lines)
    } else {
        Err(CliError::Data(problems.join("; ")))
    }
}
