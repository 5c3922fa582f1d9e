//! Fixtures shared by the acceptance binaries: the reference schedule, a
//! synthetic noisy-texture corpus, and a model trained once with the pinned
//! recipe then cached on disk so every binary (and every rerun) reuses it.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use rddpm_core::denoiser::DenoiserModel;
use rddpm_core::io::{load_weights, save_weights};
use rddpm_core::sampler::{SamplerConfig, SamplerKind};
use rddpm_core::synth::{degrade_seeded, toy_texture, DegradationSpec};
use rddpm_core::train::{TrainConfig, Trainer};
use rddpm_core::{ImageGrid, NoiseSchedule};

pub const SIGMA: f64 = 0.2;
pub const TRAIN_ITERATIONS: usize = 20_000;
pub const TRAIN_SEED: u64 = 42;

pub fn schedule() -> NoiseSchedule {
    NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap()
}

/// The inference protocol used when a test despeckles with the shared
/// trained model.
pub fn eval_sampler(seed: u64) -> SamplerConfig {
    SamplerConfig {
        kind: SamplerKind::Ddim,
        num_inference_steps: Some(50),
        eta: 1.0,
        seed,
        ..SamplerConfig::default()
    }
}

/// Clean texture plus its Gaussian-degraded counterpart at [`SIGMA`].
pub fn texture_pair(size: usize, seed: u64) -> (ImageGrid, ImageGrid) {
    texture_pair_sized(size, size, seed)
}

pub fn texture_pair_sized(height: usize, width: usize, seed: u64) -> (ImageGrid, ImageGrid) {
    let clean = toy_texture(height, width, seed).unwrap();
    let noisy =
        degrade_seeded(&clean, &DegradationSpec::gaussian(SIGMA, seed ^ 0xabcd)).unwrap();
    (clean, noisy)
}

pub fn training_set() -> Vec<(ImageGrid, ImageGrid)> {
    (0..2000).map(|i| texture_pair(64, 1_000 + i)).collect()
}

pub fn held_out_set(count: usize) -> Vec<(ImageGrid, ImageGrid)> {
    (0..count as u64).map(|i| texture_pair(64, 50_000 + i)).collect()
}

fn cache_path() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .join(format!("despeckler-weights-{TRAIN_ITERATIONS}.rdw"))
}

/// The standard-recipe model: learning rate 2e-5, batches of 4, 2000 texture
/// patches. Training runs at most once per target directory; the weights are
/// published with an atomic rename so concurrent binaries never read a
/// half-written file.
pub fn trained_model() -> DenoiserModel {
    static MODEL: OnceLock<DenoiserModel> = OnceLock::new();
    MODEL
        .get_or_init(|| {
            let path = cache_path();
            if let Ok(model) = load_weights(&path) {
                return model;
            }
            eprintln!(
                "training the shared model ({TRAIN_ITERATIONS} iterations); \
                 later runs will reuse {}",
                path.display()
            );
            let schedule = schedule();
            let data = training_set();
            let cfg = TrainConfig {
                learning_rate: 2e-5,
                batch_size: 4,
                iterations: TRAIN_ITERATIONS,
                seed: TRAIN_SEED,
                ..TrainConfig::default()
            };
            let mut model = DenoiserModel::tiny_cnn(1, TRAIN_SEED).unwrap();
            let mut trainer = Trainer::new(cfg, &model).unwrap();
            trainer
                .run(&mut model, &data, &schedule, TRAIN_ITERATIONS, |i, loss| {
                    if (i + 1) % 2000 == 0 {
                        eprintln!("  iteration {:>6}/{TRAIN_ITERATIONS} loss {loss:.4}", i + 1);
                    }
                })
                .unwrap();
            let partial = path.with_extension("partial");
            save_weights(&model, &partial, true).unwrap();
            std::fs::rename(&partial, &path).unwrap();
            model
        })
        .clone()
}
