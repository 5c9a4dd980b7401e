use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Record of one CLI invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub inputs: Vec<String>,
    pub output_dir: String,
    pub artifacts: Vec<Artifact>,
}

pub fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST_NAME) {
            out.push(path);
        }
    }
    Ok(())
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config,
            seeds: BTreeMap::new(),
            started_unix: now_unix(),
            finished_unix: 0.0,
            inputs: Vec::new(),
            output_dir: String::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    /// Checksums every file under `dir` and writes the manifest there.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        let mut files = Vec::new();
        collect_files(dir, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(dir).unwrap_or(&f);
            self.artifacts.push(Artifact {
                path: rel.to_string_lossy().replace('\\', "/"),
                bytes: fs::metadata(&f)?.len(),
                sha256: sha256_file(&f)?,
            });
        }
        self.output_dir = dir.display().to_string();
        self.finished_unix = now_unix();
        let path = dir.join(MANIFEST_NAME);
        fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
