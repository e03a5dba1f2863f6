use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_DIR: &str = "manifests";

/// Record of one CLI invocation, written to `<out>/manifests/<command>.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: String,
    pub config_digest: String,
    pub seed: u64,
    /// SHA-256 of every file read.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every file written.
    pub outputs: BTreeMap<String, String>,
    pub exit_code: u8,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

pub fn file_digest(path: &Path) -> String {
    match fs::read(path) {
        Ok(bytes) => hex::encode(Sha256::digest(&bytes)),
        Err(_) => "unreadable".into(),
    }
}

pub fn digests(paths: &[PathBuf]) -> BTreeMap<String, String> {
    paths.iter().map(|p| (p.display().to_string(), file_digest(p))).collect()
}

impl RunManifest {
    pub fn write(&self, out: &Path) -> std::io::Result<PathBuf> {
        let dir = out.join(MANIFEST_DIR);
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{}.json", self.command));
        let mut body = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        body.push('\n');
        fs::write(&path, body)?;
        Ok(path)
    }
}
