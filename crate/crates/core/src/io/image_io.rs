//! Image loading and saving.
//!
//! Two families of formats are supported:
//!
//! * 8-bit grayscale PNG or PGM, mapped to `[-1, 1]` via `v / 127.5 - 1`
//!   (so code 0 reads as exactly `-1.0` and 255 as exactly `+1.0`);
//! * a raw little-endian `f32` grid with a text sidecar `<path>.dims`
//!   holding `height width channels`, which round-trips without
//!   quantization and therefore without precision loss.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use image::ImageReader;

use crate::{Error, ImageGrid, Result, ValueDomain};

/// On-disk encoding, normally inferred from the file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Pgm,
    /// Raw little-endian `f32` samples in row-major interleaved order plus a
    /// `<path>.dims` text sidecar.
    RawF32,
}

impl ImageFormat {
    /// Infers the format from `path`'s extension (`png`, `pgm`, `raw`/`f32`).
    pub fn from_path(path: &Path) -> Result<ImageFormat> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(ImageFormat::Png),
            "pgm" => Ok(ImageFormat::Pgm),
            "raw" | "f32" => Ok(ImageFormat::RawF32),
            _ => Err(Error::UnsupportedImage {
                path: path.to_path_buf(),
                reason: format!("unrecognized extension {ext:?} (expected png, pgm, raw, or f32)"),
            }),
        }
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".dims");
    std::path::PathBuf::from(name)
}

/// Loads an image and maps it into the `[-1, 1]` working domain. The format
/// is inferred from the extension.
pub fn load_image(path: &Path) -> Result<ImageGrid> {
    match ImageFormat::from_path(path)? {
        ImageFormat::Png | ImageFormat::Pgm => load_8bit(path),
        ImageFormat::RawF32 => load_raw(path),
    }
}

fn load_8bit(path: &Path) -> Result<ImageGrid> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = reader
        .decode()
        .map_err(|e| Error::ImageCodec { path: path.to_path_buf(), source: e })?;
    let gray = match decoded {
        image::DynamicImage::ImageLuma8(img) => img,
        other => {
            return Err(Error::UnsupportedImage {
                path: path.to_path_buf(),
                reason: format!(
                    "expected 8-bit grayscale, got {:?}",
                    other.color()
                ),
            })
        }
    };
    let (w, h) = gray.dimensions();
    let values: Vec<f64> = gray.as_raw().iter().map(|&v| f64::from(v) / 127.5 - 1.0).collect();
    ImageGrid::from_values(h as usize, w as usize, 1, ValueDomain::Normalized, values)
}

fn load_raw(path: &Path) -> Result<ImageGrid> {
    let sidecar = sidecar_path(path);
    let dims_text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let dims: Vec<usize> = dims_text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<usize>().map_err(|_| Error::UnsupportedImage {
                path: sidecar.clone(),
                reason: format!("sidecar token {tok:?} is not a dimension"),
            })
        })
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::UnsupportedImage {
            path: sidecar,
            reason: format!("sidecar must hold `height width channels`, got {} tokens", dims.len()),
        });
    }
    let (h, w, c) = (dims[0], dims[1], dims[2]);
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::UnsupportedImage {
            path: path.to_path_buf(),
            reason: "sidecar dimensions overflow".into(),
        })?;
    if bytes.len() != expected {
        return Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            reason: format!(
                "raw block holds {} bytes but sidecar {h}x{w}x{c} needs {expected}",
                bytes.len()
            ),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|ch| f64::from(f32::from_le_bytes([ch[0], ch[1], ch[2], ch[3]])))
        .collect();
    let domain = if values.iter().all(|v| (-1.0..=1.0).contains(v)) {
        ValueDomain::Normalized
    } else {
        ValueDomain::Unconstrained
    };
    ImageGrid::from_values(h, w, c, domain, values)
}

/// Saves `img` to `path` in `format`. 8-bit formats clamp to `[-1, 1]` first
/// and quantize with `round((v + 1) * 127.5)`; the raw format stores each
/// sample as a little-endian `f32` and writes a `<path>.dims` sidecar.
/// Refuses to replace an existing file unless `overwrite` is set.
pub fn save_image(img: &ImageGrid, path: &Path, format: ImageFormat, overwrite: bool) -> Result<()> {
    if !overwrite && path.exists() {
        return Err(Error::WouldOverwrite(path.to_path_buf()));
    }
    match format {
        ImageFormat::Png | ImageFormat::Pgm => save_8bit(img, path),
        ImageFormat::RawF32 => save_raw(img, path),
    }
}

fn save_8bit(img: &ImageGrid, path: &Path) -> Result<()> {
    if img.channels() != 1 {
        return Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            reason: format!("8-bit grayscale output needs 1 channel, image has {}", img.channels()),
        });
    }
    let pixels: Vec<u8> = img
        .values()
        .iter()
        .map(|&v| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8)
        .collect();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, pixels)
        .expect("pixel buffer length matches dimensions");
    buf.save(path)
        .map_err(|e| Error::ImageCodec { path: path.to_path_buf(), source: e })
}

fn save_raw(img: &ImageGrid, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(img.values().len() * 4);
    for &v in img.values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = sidecar_path(path);
    fs::write(
        &sidecar,
        format!("{} {} {}\n", img.height(), img.width(), img.channels()),
    )
    .map_err(|e| Error::io(&sidecar, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ImageGrid;
    use rand::SeedableRng;

    fn tmp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("rddpm-image-io-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn noise(h: usize, w: usize, c: usize, seed: u64) -> ImageGrid {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ImageGrid::standard_normal(h, w, c, &mut rng).unwrap()
    }

    #[test]
    fn eight_bit_endpoints_map_exactly() {
        let dir = tmp_dir("endpoints");
        let path = dir.join("endpoints.png");
        let buf = image::GrayImage::from_raw(2, 1, vec![0u8, 255u8]).unwrap();
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.values()[0], -1.0);
        assert_eq!(img.values()[1], 255.0 / 127.5 - 1.0);
        assert_eq!(img.values()[1], 1.0);
    }

    #[test]
    fn eight_bit_round_trip_error_is_bounded() {
        let dir = tmp_dir("roundtrip8");
        for ext in ["png", "pgm"] {
            let path = dir.join(format!("rt.{ext}"));
            let src = noise(9, 13, 1, 77).map(ValueDomain::Normalized, |v| (v * 0.5).clamp(-1.0, 1.0));
            let format = ImageFormat::from_path(&path).unwrap();
            save_image(&src, &path, format, true).unwrap();
            let back = load_image(&path).unwrap();
            for (a, b) in src.values().iter().zip(back.values()) {
                assert!((a - b).abs() <= 1.0 / 255.0 + 1e-12, "{ext}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn eight_bit_codes_survive_save_load_save() {
        let dir = tmp_dir("codes");
        let path = dir.join("codes.png");
        let codes: Vec<u8> = (0..=255).collect();
        let buf = image::GrayImage::from_raw(16, 16, codes.clone()).unwrap();
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        let path2 = dir.join("codes2.png");
        save_image(&img, &path2, ImageFormat::Png, true).unwrap();
        let again = image::open(&path2).unwrap().into_luma8();
        assert_eq!(again.as_raw(), &codes);
    }

    #[test]
    fn raw_round_trip_is_bit_exact() {
        let dir = tmp_dir("raw");
        let path = dir.join("grid.raw");
        let src = noise(7, 5, 2, 3).map(ValueDomain::Unconstrained, |v| (v as f32) as f64);
        save_image(&src, &path, ImageFormat::RawF32, true).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.height(), 7);
        assert_eq!(back.width(), 5);
        assert_eq!(back.channels(), 2);
        assert_eq!(src.values(), back.values());

        let path2 = dir.join("grid2.raw");
        save_image(&back, &path2, ImageFormat::RawF32, true).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn refuses_silent_overwrite() {
        let dir = tmp_dir("overwrite");
        let path = dir.join("once.png");
        let img = ImageGrid::constant(4, 4, 1, ValueDomain::Normalized, 0.25).unwrap();
        save_image(&img, &path, ImageFormat::Png, false).unwrap();
        let err = save_image(&img, &path, ImageFormat::Png, false).unwrap_err();
        assert!(matches!(err, Error::WouldOverwrite(_)));
        save_image(&img, &path, ImageFormat::Png, true).unwrap();
    }

    #[test]
    fn rejects_non_grayscale_and_bad_sidecars() {
        let dir = tmp_dir("reject");
        let rgb_path = dir.join("rgb.png");
        let rgb = image::RgbImage::from_raw(2, 2, vec![0u8; 12]).unwrap();
        rgb.save(&rgb_path).unwrap();
        assert!(matches!(
            load_image(&rgb_path).unwrap_err(),
            Error::UnsupportedImage { .. }
        ));

        let raw_path = dir.join("bad.raw");
        fs::write(&raw_path, [0u8; 8]).unwrap();
        fs::write(sidecar_path(&raw_path), "2 2 1\n").unwrap();
        assert!(matches!(
            load_image(&raw_path).unwrap_err(),
            Error::UnsupportedImage { .. }
        ));

        assert!(ImageFormat::from_path(Path::new("x.tiff")).is_err());
    }
}
