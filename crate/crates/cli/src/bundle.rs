//! Run artifact bundle: a directory of stage outputs plus a hashed manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const FAILED_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub root_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub stages: Vec<String>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST)).with_context(|| format!("no manifest in {}", dir.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Recomputes every file hash and reports the paths that disagree.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.files {
            let data = fs::read(dir.join(&f.path))?;
            if sha256_hex(&data) != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Collects written files while a pipeline runs.
#[derive(Debug)]
pub struct Bundle {
    root: PathBuf,
    files: BTreeMap<String, FileEntry>,
    pub seeds: BTreeMap<String, u64>,
    pub stages: Vec<String>,
}

impl Bundle {
    /// Creates `root`, removing results of a previous run of the same bundle.
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        for stale in [MANIFEST, FAILED_MARKER] {
            let p = root.join(stale);
            if p.exists() {
                fs::remove_file(&p)?;
            }
        }
        Ok(Self { root: root.to_path_buf(), files: BTreeMap::new(), seeds: BTreeMap::new(), stages: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, data: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, data.as_ref()).with_context(|| format!("cannot write {}", path.display()))?;
        self.record(rel)
    }

    /// Registers a file already written under the bundle root.
    pub fn record(&mut self, rel: &str) -> Result<()> {
        let data = fs::read(self.root.join(rel))?;
        self.files.insert(
            rel.to_string(),
            FileEntry { path: rel.to_string(), sha256: sha256_hex(&data), bytes: data.len() as u64 },
        );
        Ok(())
    }

    pub fn finish(self, name: &str, config_hash: &str, root_seed: u64, failed_stage: Option<(&str, &str)>) -> Result<Manifest> {
        if let Some((stage, message)) = failed_stage {
            fs::write(self.root.join(FAILED_MARKER), format!("stage: {stage}\nerror: {message}\n"))?;
        }
        let manifest = Manifest {
            name: name.to_string(),
            config_hash: config_hash.to_string(),
            root_seed,
            seeds: self.seeds,
            stages: self.stages,
            status: if failed_stage.is_some() { "failed".into() } else { "complete".into() },
            failed_stage: failed_stage.map(|(s, _)| s.to_string()),
            files: self.files.into_values().collect(),
        };
        fs::write(self.root.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}
