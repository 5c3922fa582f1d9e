use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rddpm_core::denoiser::DenoiserModel;
use rddpm_core::diffusion::q_sample;
use rddpm_core::io::save_weights;
use rddpm_core::metrics::{psnr, ssim, SsimParams};
use rddpm_core::sampler::{sample, SamplerConfig, SamplerKind};
use rddpm_core::synth::{degrade_seeded, toy_texture, DegradationSpec};
use rddpm_core::train::{TrainConfig, Trainer};
use rddpm_core::{ImageGrid, NoiseSchedule, ValueDomain};

fn pair(seed: u64) -> (ImageGrid, ImageGrid) {
    let clean = toy_texture(64, 64, seed).unwrap();
    let noisy = degrade_seeded(&clean, &DegradationSpec::gaussian(0.2, seed ^ 0xabcd)).unwrap();
    (clean, noisy)
}

fn eval(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    held: &[(ImageGrid, ImageGrid)],
    cfg: &SamplerConfig,
    n: usize,
) -> (f64, f64) {
    let (mut p, mut s) = (0.0, 0.0);
    for (clean, noisy) in held.iter().take(n) {
        let restored = sample(noisy, model, schedule, cfg).unwrap();
        p += psnr(&restored.to_intensity(), &clean.to_intensity(), 1.0).unwrap();
        s += ssim(
            &restored.to_intensity(),
            &clean.to_intensity(),
            &SsimParams::default(),
        )
        .unwrap();
    }
    (p / n as f64, s / n as f64)
}

fn loss_at_t(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    held: &[(ImageGrid, ImageGrid)],
    t: usize,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut total = 0.0;
    let mut n = 0.0;
    for (clean, noisy) in held.iter().take(4) {
        let eps = ImageGrid::standard_normal(64, 64, 1, &mut rng).unwrap();
        let x_t = q_sample(clean, t, &eps, schedule).unwrap();
        let pred = model.predict(&x_t, noisy, t, schedule).unwrap();
        for (p, e) in pred.values().iter().zip(eps.values()) {
            total += (p - e) * (p - e);
            n += 1.0;
        }
    }
    total / n
}

fn main() {
    let schedule = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let train_set: Vec<(ImageGrid, ImageGrid)> = (0..2000).map(|i| pair(1_000 + i)).collect();
    let held: Vec<(ImageGrid, ImageGrid)> = (0..8).map(|i| pair(50_000 + i)).collect();

    let base_p: f64 = held
        .iter()
        .map(|(c, n)| psnr(&c.to_intensity(), &n.to_intensity(), 1.0).unwrap())
        .sum::<f64>()
        / held.len() as f64;
    eprintln!("noisy baseline psnr {base_p:.3}");

    let ddim50 = SamplerConfig {
        kind: SamplerKind::Ddim,
        num_inference_steps: Some(50),
        eta: 0.0,
        seed: 9,
        ..SamplerConfig::default()
    };
    let ddim50e1 = SamplerConfig {
        eta: 1.0,
        ..ddim50.clone()
    };
    let ddpm = SamplerConfig {
        seed: 9,
        ..SamplerConfig::default()
    };

    let cfg = TrainConfig {
        learning_rate: 2e-5,
        batch_size: 4,
        iterations: 0,
        seed: 42,
        ..TrainConfig::default()
    };
    let mut model = DenoiserModel::tiny_cnn(1, 42).unwrap();
    let mut trainer = Trainer::new(cfg, &model).unwrap();

    let mut done = 0usize;
    while done < 20_000 {
        let t0 = Instant::now();
        let losses = trainer
            .run(&mut model, &train_set, &schedule, 1000, |_, _| {})
            .unwrap();
        done += 1000;
        let tail = &losses[900..];
        let mean_loss = tail.iter().sum::<f64>() / tail.len() as f64;
        let train_s = t0.elapsed().as_secs_f64();

        save_weights(&model, std::path::Path::new(&format!("/tmp/ckpt-{done}.rdw")), true)
            .unwrap();

        let buckets: Vec<String> = [1000usize, 900, 600, 300, 100, 10]
            .iter()
            .map(|&t| format!("l({t})={:.4}", loss_at_t(&model, &schedule, &held, t)))
            .collect();

        let t1 = Instant::now();
        let (p_ddim, s_ddim) = eval(&model, &schedule, &held, &ddim50, 4);
        let (p_e1, _) = eval(&model, &schedule, &held, &ddim50e1, 4);
        let (p_ddpm, s_ddpm) = eval(&model, &schedule, &held, &ddpm, 2);
        eprintln!(
            "iter {done:>6} loss {mean_loss:.4} | ddim50 {p_ddim:.2}dB ssim {s_ddim:.3} | ddim50-eta1 {p_e1:.2}dB | ddpm1000 {p_ddpm:.2}dB ssim {s_ddpm:.3} | {} | train {train_s:.0}s eval {:.0}s",
            buckets.join(" "),
            t1.elapsed().as_secs_f64()
        );
    }
    let _ = ValueDomain::Unconstrained;
}
