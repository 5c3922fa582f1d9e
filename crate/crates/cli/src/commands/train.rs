use std::io::Write as _;

use rddpm_core::denoiser::DenoiserModel;
use rddpm_core::io::{
    effective_output_dir, load_image, load_weights, resolve_entry_path, save_weights,
    DatasetManifest,
};
use rddpm_core::train::{TrainConfig, Trainer};
use rddpm_core::{Error, Result};

use crate::args::TrainArgs;

pub fn run(args: &TrainArgs) -> Result<()> {
    let cfg = super::load_config(args.config.as_deref())?;
    let schedule = super::build_schedule(&cfg, &args.schedule)?;
    let out_dir = effective_output_dir(&cfg, args.out_dir.as_deref());

    let manifest_path = args
        .manifest
        .clone()
        .or_else(|| cfg.manifest.clone())
        .ok_or_else(|| Error::InvalidConfig("training requires a dataset manifest".into()))?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "manifest {} lists no image pairs",
            manifest_path.display()
        )));
    }

    let mut dataset = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let clean = load_image(&resolve_entry_path(&manifest_path, &entry.clean))?;
        let degraded = load_image(&resolve_entry_path(&manifest_path, &entry.degraded))?;
        dataset.push((clean, degraded));
    }

    let train_cfg = TrainConfig {
        learning_rate: args.lr.unwrap_or(cfg.train.learning_rate),
        batch_size: args.batch.unwrap_or(cfg.train.batch_size),
        iterations: args.iterations.unwrap_or(cfg.train.iterations),
        seed: args.seed.unwrap_or(cfg.train.seed),
        ..cfg.train.clone()
    };
    let iterations = train_cfg.iterations;

    let mut model = match &args.resume {
        Some(path) => load_weights(path)?,
        None => DenoiserModel::tiny_cnn(1, train_cfg.seed)?,
    };

    let mut trainer = Trainer::new(train_cfg, &model)?;
    let losses = trainer.run(
        &mut model,
        &dataset,
        &schedule,
        iterations,
        |iteration, loss| {
            if iteration % 50 == 0 || iteration + 1 == iterations {
                eprint!("\riteration {:>6}/{} loss {loss:.6}", iteration + 1, iterations);
                std::io::stderr().flush().ok();
            }
        },
    )?;
    eprintln!();

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let weights_path = out_dir.join("weights.rdw");
    save_weights(&model, &weights_path, args.overwrite)?;

    let loss_path = out_dir.join("loss.csv");
    super::refuse_overwrite(&loss_path, args.overwrite)?;
    let mut csv = String::from("iteration,loss\n");
    for (i, loss) in losses.iter().enumerate() {
        csv.push_str(&format!("{},{loss}\n", i + 1));
    }
    std::fs::write(&loss_path, csv).map_err(|e| Error::io(&loss_path, e))?;

    let final_loss = losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {iterations} iterations, final loss {final_loss:.6}, weights at {}",
        weights_path.display()
    );
    Ok(())
}
