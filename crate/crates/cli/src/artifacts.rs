use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "MANIFEST";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// JSON artifact: the payload plus the resolved config that produced it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub kind: String,
    pub config: RunConfig,
    pub config_sha256: String,
    pub payload: T,
}

impl<T> Artifact<T> {
    pub fn new(kind: &str, config: &RunConfig, payload: T) -> Self {
        let text = serde_json::to_string(config).expect("config serializes");
        Self { kind: kind.into(), config: config.clone(), config_sha256: sha256_hex(text.as_bytes()), payload }
    }
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path) -> Result<Artifact<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let art: Artifact<T> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let again = sha256_hex(serde_json::to_string(&art.config)?.as_bytes());
    if again != art.config_sha256 {
        bail!("{}: embedded config does not match its hash", path.display());
    }
    Ok(art)
}

/// Files written into one output directory, with their hashes.
pub struct Bundle {
    dir: PathBuf,
    files: BTreeMap<String, String>,
    notes: Vec<String>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), files: BTreeMap::new(), notes: Vec::new() })
    }

    /// Continue an existing bundle, keeping the entries of its MANIFEST.
    pub fn open(dir: &Path) -> Result<Self> {
        let mut bundle = Self::create(dir)?;
        if let Ok(text) = fs::read_to_string(dir.join(MANIFEST)) {
            for line in text.lines() {
                if let Some(note) = line.strip_prefix("# ") {
                    bundle.notes.push(note.to_string());
                } else if let Some((hash, name)) = line.split_once("  ") {
                    bundle.files.insert(name.to_string(), hash.to_string());
                }
            }
        }
        Ok(bundle)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, kind: &str, config: &RunConfig, payload: T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(&Artifact::new(kind, config, payload))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write_bytes(name, text.as_bytes())
    }

    pub fn note(&mut self, line: String) {
        self.notes.push(line);
    }

    /// `MANIFEST`: one `sha256  name` line per file, then `# ` notes.
    pub fn finish(mut self) -> Result<PathBuf> {
        let mut text = String::new();
        for (name, hash) in &self.files {
            text.push_str(&format!("{hash}  {name}\n"));
        }
        for note in &self.notes {
            text.push_str(&format!("# {note}\n"));
        }
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.files.clear();
        Ok(path)
    }
}

/// Re-hash every file listed in a bundle's MANIFEST; returns mismatches.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.join(MANIFEST)).with_context(|| format!("reading MANIFEST in {}", dir.display()))?;
    let mut bad = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let Some((hash, name)) = line.split_once("  ") else {
            bail!("malformed MANIFEST line: {line}");
        };
        match fs::read(dir.join(name)) {
            Ok(bytes) if sha256_hex(&bytes) == hash => {}
            _ => bad.push(name.to_string()),
        }
    }
    Ok(bad)
}
