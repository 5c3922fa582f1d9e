//! Disk plumbing: images, dataset manifests, weight containers, run
//! configuration, and patch tiling.
//!
//! Everything here normalizes to the crate-wide `[-1, 1]` value domain at the
//! boundary so the numerical modules never see raw 8-bit codes. Nothing in
//! this module overwrites an existing file unless the caller passes an
//! explicit `overwrite` flag.

mod config;
mod image_io;
mod manifest;
mod tile;
mod weights;

pub use config::{
    effective_output_dir, RegionalConfig, RunConfig, ScheduleConfig, OUTPUT_DIR_ENV,
};
pub use image_io::{load_image, save_image, ImageFormat};
pub use manifest::{resolve_entry_path, DatasetManifest, ManifestEntry};
pub use tile::{tile_dataset, TileReport};
pub use weights::{decode_weights, load_weights, save_weights};
