//! Dataset manifests: TOML files pairing each clean image with its degraded
//! counterpart and the degradation that produced it. Paths are stored as
//! written (normally relative) and resolved against the manifest's parent
//! directory, so a dataset directory can be moved wholesale.

use std::fs;
use std::path::{Path, PathBuf};

use crate::synth::DegradationSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub clean: String,
    pub degraded: String,
    pub spec: DegradationSpec,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| Error::TomlParse {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        for entry in &manifest.entries {
            entry.spec.validate()?;
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path, overwrite: bool) -> Result<()> {
        if !overwrite && path.exists() {
            return Err(Error::WouldOverwrite(path.to_path_buf()));
        }
        let text = toml::to_string_pretty(self).map_err(|e| Error::TomlWrite {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Orders entries by clean path (then degraded path) so regenerated
    /// manifests compare byte-for-byte regardless of directory listing order.
    pub fn sort(&mut self) {
        self.entries
            .sort_by(|a, b| (a.clean.as_str(), a.degraded.as_str()).cmp(&(b.clean.as_str(), b.degraded.as_str())));
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Resolves a manifest-relative path against the manifest's directory.
/// Absolute paths pass through untouched.
pub fn resolve_entry_path(manifest_path: &Path, entry_path: &str) -> PathBuf {
    let p = Path::new(entry_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(p)
    }
}
