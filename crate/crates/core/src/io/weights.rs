//! Versioned weight container.
//!
//! Layout: a small UTF-8 header, one `key: value` per line, terminated by a
//! `data:` line, followed by the raw parameter block as little-endian `f32`
//! values in flat layout order. The header records the container version,
//! architecture id, channel count, receptive window, parameter count, init
//! seed, and a SHA-256 checksum of the float block. Loading verifies the
//! checksum and the architecture id before any parameter reaches a model, so
//! a flipped byte or a mismatched layout is refused rather than misloaded.
//!
//! Parameters are quantized to `f32` at initialization and after every
//! optimizer update, so the save/load round trip is bit-identical.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::denoiser::{DenoiserModel, TinyCnn};
use crate::{Error, Result};

const MAGIC: &str = "rddpm-weights v1";

fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn float_block(params: &[f64]) -> Vec<u8> {
    let mut block = Vec::with_capacity(params.len() * 4);
    for &p in params {
        block.extend_from_slice(&(p as f32).to_le_bytes());
    }
    block
}

/// Serializes a trainable model. Errors with [`Error::NotTrainable`] for
/// models that have no parameters to store.
pub fn save_weights(model: &DenoiserModel, path: &Path, overwrite: bool) -> Result<()> {
    let cnn = model
        .as_tiny_cnn()
        .ok_or(Error::NotTrainable(model.kind_name()))?;
    if !overwrite && path.exists() {
        return Err(Error::WouldOverwrite(path.to_path_buf()));
    }
    let block = float_block(cnn.params());
    let checksum = hex(&Sha256::digest(&block));
    let header = format!(
        "{MAGIC}\narchitecture: {}\nchannels: {}\nreceptive: {}\nparams: {}\nseed: {}\nsha256: {}\ndata:\n",
        cnn.architecture_id(),
        cnn.channels(),
        cnn.receptive(),
        cnn.param_count(),
        cnn.init_seed(),
        checksum,
    );
    let mut bytes = header.into_bytes();
    bytes.extend_from_slice(&block);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::WeightFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a weight container back into a model, verifying the checksum and
/// architecture id along the way.
pub fn load_weights(path: &Path) -> Result<DenoiserModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes, path)
}

/// Parses a weight container already in memory (an embedded asset, a network
/// payload); `path` only labels error messages.
pub fn decode_weights(bytes: &[u8], path: &Path) -> Result<DenoiserModel> {
    let marker = b"\ndata:\n";
    let data_at = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| format_err(path, "missing data: marker"))?;
    let header = std::str::from_utf8(&bytes[..data_at])
        .map_err(|_| format_err(path, "header is not UTF-8"))?;
    let block = &bytes[data_at + marker.len()..];

    let mut lines = header.lines();
    match lines.next() {
        Some(MAGIC) => {}
        Some(other) => {
            return Err(format_err(
                path,
                format!("unsupported container version {other:?} (expected {MAGIC:?})"),
            ))
        }
        None => return Err(format_err(path, "empty header")),
    }

    let mut architecture = None;
    let mut channels = None;
    let mut receptive = None;
    let mut params = None;
    let mut seed = None;
    let mut sha = None;
    for line in lines {
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| format_err(path, format!("malformed header line {line:?}")))?;
        let value = value.trim();
        match key.trim() {
            "architecture" => architecture = Some(value.to_string()),
            "channels" => channels = value.parse::<usize>().ok(),
            "receptive" => receptive = value.parse::<usize>().ok(),
            "params" => params = value.parse::<usize>().ok(),
            "seed" => seed = value.parse::<u64>().ok(),
            "sha256" => sha = Some(value.to_string()),
            other => {
                return Err(format_err(path, format!("unknown header key {other:?}")));
            }
        }
    }
    let architecture = architecture.ok_or_else(|| format_err(path, "missing architecture"))?;
    let channels = channels.ok_or_else(|| format_err(path, "missing or invalid channels"))?;
    let receptive = receptive.ok_or_else(|| format_err(path, "missing or invalid receptive"))?;
    let params = params.ok_or_else(|| format_err(path, "missing or invalid params"))?;
    let seed = seed.ok_or_else(|| format_err(path, "missing or invalid seed"))?;
    let sha = sha.ok_or_else(|| format_err(path, "missing sha256"))?;

    if block.len() != params * 4 {
        return Err(format_err(
            path,
            format!("float block holds {} bytes, header promises {}", block.len(), params * 4),
        ));
    }
    let computed = hex(&Sha256::digest(block));
    if computed != sha.to_ascii_lowercase() {
        return Err(Error::ChecksumMismatch {
            path: path.to_path_buf(),
            stored: sha,
            computed,
        });
    }

    let values: Vec<f64> = block
        .chunks_exact(4)
        .map(|ch| f64::from(f32::from_le_bytes([ch[0], ch[1], ch[2], ch[3]])))
        .collect();
    let cnn = TinyCnn::from_params(channels, receptive, seed, values)?;
    if cnn.architecture_id() != architecture {
        return Err(Error::ArchitectureMismatch {
            path: path.to_path_buf(),
            expected: cnn.architecture_id(),
            got: architecture,
        });
    }
    Ok(DenoiserModel::TinyCnn(cnn))
}
