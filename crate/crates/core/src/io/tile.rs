//! Patch tiling: cuts every clean/degraded pair of a dataset into square
//! patches on a row-major grid and emits a new manifest for the patches.
//! Patches are stored in the raw `f32` format so tiling adds no quantization
//! error on top of the source images.

use std::fs;
use std::path::{Path, PathBuf};

use super::image_io::{load_image, save_image, ImageFormat};
use super::manifest::{resolve_entry_path, DatasetManifest, ManifestEntry};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileReport {
    /// Number of clean/degraded patch pairs written.
    pub patches: usize,
    /// Source pairs skipped because the patch does not fit.
    pub skipped: usize,
    /// Human-readable notes about skipped pairs.
    pub warnings: Vec<String>,
    /// Manifest describing the emitted patches.
    pub manifest_path: PathBuf,
}

fn origins(extent: usize, patch: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..=extent - patch).step_by(stride)
}

/// Tiles every pair in `manifest` into `patch`-sized squares stepped by
/// `stride`, writing patches and a patch manifest under `out_dir`. Only
/// fully contained patches are emitted; a source image smaller than the
/// patch on either side is skipped with a warning. Returns the number of
/// patch pairs written.
pub fn tile_dataset(
    manifest_path: &Path,
    patch: usize,
    stride: usize,
    out_dir: &Path,
    overwrite: bool,
) -> Result<TileReport> {
    if patch == 0 || stride == 0 {
        return Err(Error::InvalidConfig(format!(
            "patch and stride must be >= 1, got patch {patch}, stride {stride}"
        )));
    }
    let manifest = DatasetManifest::load(manifest_path)?;
    let clean_dir = out_dir.join("clean");
    let noisy_dir = out_dir.join("noisy");
    fs::create_dir_all(&clean_dir).map_err(|e| Error::io(&clean_dir, e))?;
    fs::create_dir_all(&noisy_dir).map_err(|e| Error::io(&noisy_dir, e))?;

    let mut out = DatasetManifest::default();
    let mut skipped = 0;
    let mut warnings = Vec::new();
    for (index, entry) in manifest.entries.iter().enumerate() {
        let clean_path = resolve_entry_path(manifest_path, &entry.clean);
        let noisy_path = resolve_entry_path(manifest_path, &entry.degraded);
        let clean = load_image(&clean_path)?;
        let noisy = load_image(&noisy_path)?;
        clean.expect_same_shape(&noisy, "tile_dataset pair")?;
        if patch > clean.height() || patch > clean.width() {
            skipped += 1;
            warnings.push(format!(
                "skipping {}: image {}x{} is smaller than patch {patch}",
                entry.clean,
                clean.height(),
                clean.width()
            ));
            continue;
        }
        let stem = clean_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("patch")
            .to_string();
        for row in origins(clean.height(), patch, stride) {
            for col in origins(clean.width(), patch, stride) {
                let name = format!("{index:04}_{stem}_r{row:05}_c{col:05}.raw");
                let clean_rel = format!("clean/{name}");
                let noisy_rel = format!("noisy/{name}");
                save_image(
                    &clean.window(row, col, patch)?,
                    &out_dir.join(&clean_rel),
                    ImageFormat::RawF32,
                    overwrite,
                )?;
                save_image(
                    &noisy.window(row, col, patch)?,
                    &out_dir.join(&noisy_rel),
                    ImageFormat::RawF32,
                    overwrite,
                )?;
                out.entries.push(ManifestEntry {
                    clean: clean_rel,
                    degraded: noisy_rel,
                    spec: entry.spec,
                });
            }
        }
    }
    let out_manifest = out_dir.join("manifest.toml");
    out.save(&out_manifest, overwrite)?;
    Ok(TileReport {
        patches: out.entries.len(),
        skipped,
        warnings,
        manifest_path: out_manifest,
    })
}
