use std::io::Write;

use rddpm_core::io::{
    effective_output_dir, save_image, tile_dataset, DatasetManifest, ImageFormat, ManifestEntry,
};
use rddpm_core::synth::{degrade_seeded, toy_texture, DegradationSpec};
use rddpm_core::{Error, Result};

use crate::args::{FormatArg, MakeDatasetArgs, NoiseKindArg};

pub fn run(args: &MakeDatasetArgs) -> Result<()> {
    if args.count == 0 || args.size == 0 {
        return Err(Error::InvalidConfig(
            "count and size must be at least 1".into(),
        ));
    }
    let cfg = super::load_config(args.config.as_deref())?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let out_dir = effective_output_dir(&cfg, args.out_dir.as_deref());

    let (format, ext) = match args.format {
        FormatArg::Png => (ImageFormat::Png, "png"),
        FormatArg::Pgm => (ImageFormat::Pgm, "pgm"),
        FormatArg::Raw => (ImageFormat::RawF32, "raw"),
    };

    let clean_dir = out_dir.join("clean");
    let noisy_dir = out_dir.join("noisy");
    std::fs::create_dir_all(&clean_dir).map_err(|e| Error::io(&clean_dir, e))?;
    std::fs::create_dir_all(&noisy_dir).map_err(|e| Error::io(&noisy_dir, e))?;

    let mut manifest = DatasetManifest::default();
    for index in 0..args.count {
        let pair_seed = seed.wrapping_add(index as u64);
        let clean = toy_texture(args.size, args.size, pair_seed)?;
        let spec = match args.kind {
            NoiseKindArg::Gaussian => DegradationSpec::gaussian(args.sigma, pair_seed ^ 0x9e37),
            NoiseKindArg::Speckle => DegradationSpec::speckle(args.looks, pair_seed ^ 0x9e37),
        };
        let noisy = degrade_seeded(&clean, &spec)?;

        let clean_rel = format!("clean/{index:04}.{ext}");
        let noisy_rel = format!("noisy/{index:04}.{ext}");
        save_image(&clean, &out_dir.join(&clean_rel), format, args.overwrite)?;
        save_image(&noisy, &out_dir.join(&noisy_rel), format, args.overwrite)?;
        manifest.entries.push(ManifestEntry {
            clean: clean_rel,
            degraded: noisy_rel,
            spec,
        });
    }
    manifest.sort();
    let manifest_path = out_dir.join("manifest.toml");
    manifest.save(&manifest_path, args.overwrite)?;
    println!(
        "wrote {} pairs of {}x{} images to {}",
        args.count,
        args.size,
        args.size,
        out_dir.display()
    );

    if let Some(patch) = args.patch {
        let stride = args.patch_stride.unwrap_or(patch);
        let patches_dir = out_dir.join("patches");
        let report = tile_dataset(&manifest_path, patch, stride, &patches_dir, args.overwrite)?;
        for warning in &report.warnings {
            eprintln!("warning: {warning}");
        }
        println!(
            "cut {} patches ({} sources skipped) into {}",
            report.patches,
            report.skipped,
            patches_dir.display()
        );
    }
    std::io::stdout().flush().ok();
    Ok(())
}
