//! Output directory with a `manifest.json` listing every file and its
//! SHA-256. Re-opening a directory keeps the entries of earlier commands.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub files: BTreeMap<String, FileEntry>,
    /// Free-form sections, e.g. the grids each command ran on.
    #[serde(default)]
    pub sections: BTreeMap<String, serde_json::Value>,
}

pub struct Bundle {
    dir: PathBuf,
    pub manifest: Manifest,
}

impl Bundle {
    /// Opens `dir`, creating it if needed and loading any existing manifest.
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let manifest = if dir.join(MANIFEST).exists() {
            read_manifest(dir)?
        } else {
            Manifest::default()
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    /// Opens an existing bundle.
    pub fn open(dir: &Path) -> Result<Self> {
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: read_manifest(dir)?,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.record(name)
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Lets `produce` write the file itself, then records it.
    pub fn write_with(&mut self, name: &str, produce: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        produce(&self.path(name))?;
        self.record(name)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let entry = checksum(&self.path(name))?;
        self.manifest.files.insert(name.to_string(), entry);
        Ok(())
    }

    pub fn section<S: Serialize>(&mut self, key: &str, value: &S) -> Result<()> {
        self.manifest
            .sections
            .insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Files whose content no longer matches the manifest.
    pub fn mismatches(&self) -> Vec<String> {
        self.manifest
            .files
            .iter()
            .filter(|(name, entry)| checksum(&self.path(name)).ok().as_ref() != Some(*entry))
            .map(|(name, _)| name.clone())
            .collect()
    }

    pub fn verify(&self) -> Result<()> {
        let bad = self.mismatches();
        if !bad.is_empty() {
            bail!(
                "checksum mismatch in {}: {}",
                self.dir.display(),
                bad.join(", ")
            );
        }
        Ok(())
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = self.path(MANIFEST);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))
}

pub fn checksum(path: &Path) -> Result<FileEntry> {
    let mut file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let bytes = std::io::copy(&mut file, &mut hasher)?;
    let sha256 = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(FileEntry { sha256, bytes })
}

/// Round-trip precision: 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
