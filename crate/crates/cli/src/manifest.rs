//! Run manifests and the output-directory overwrite guard.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a command: the effective config, the seeds it
/// consumed and the hashes of the inputs it read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, InputHash>,
    pub outputs: Vec<String>,
    /// Command-specific details (counts, shot composition, ...).
    #[serde(default)]
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(&mut self, name: &str, path: &Path) -> anyhow::Result<&mut Self> {
        let sha256 = sha256_file(path)?;
        self.inputs.insert(name.to_string(), InputHash { path: path.to_path_buf(), sha256 });
        Ok(self)
    }

    pub fn optional_input(&mut self, name: &str, path: Option<&Path>) -> anyhow::Result<&mut Self> {
        if let Some(p) = path {
            self.input(name, p)?;
        }
        Ok(self)
    }
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let file = File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf).with_context(|| format!("hashing {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// An output directory whose files may only be replaced with `--force`.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    force: bool,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>, force: bool) -> Self {
        Self { root: root.into(), force }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Create the directory and check that none of `names` exist yet,
    /// unless overwriting was requested.
    pub fn claim(&self, names: &[&str]) -> anyhow::Result<()> {
        std::fs::create_dir_all(&self.root).with_context(|| format!("creating {}", self.root.display()))?;
        if self.force {
            return Ok(());
        }
        let existing: Vec<&str> = names.iter().copied().filter(|n| self.root.join(n).exists()).collect();
        if !existing.is_empty() {
            bail!("{} already contains {}; pass --force to overwrite", self.root.display(), existing.join(", "));
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_manifest(&self, mut manifest: Manifest, outputs: &[&str]) -> anyhow::Result<PathBuf> {
        manifest.outputs = outputs.iter().map(|s| s.to_string()).collect();
        let name = format!("{}.manifest.json", manifest.command.replace(' ', "_"));
        self.write_json(&name, &manifest)
    }
}
