use rddpm_core::denoiser::DenoiserModel;
use rddpm_core::io::load_weights;
use rddpm_core::metrics::{psnr, ssim, SsimParams};
use rddpm_core::sampler::{sample, SamplerConfig, SamplerKind, VarianceChoice};
use rddpm_core::synth::{degrade_seeded, toy_texture, DegradationSpec};
use rddpm_core::ImageGrid;
use rddpm_core::NoiseSchedule;

fn pair(seed: u64) -> (ImageGrid, ImageGrid) {
    let clean = toy_texture(64, 64, seed).unwrap();
    let noisy = degrade_seeded(&clean, &DegradationSpec::gaussian(0.2, seed ^ 0xabcd)).unwrap();
    (clean, noisy)
}

fn mean_image(images: &[ImageGrid]) -> ImageGrid {
    let mut acc = images[0].clone();
    let n = images.len() as f64;
    for img in &images[1..] {
        for (a, &v) in acc.values_mut().iter_mut().zip(img.values()) {
            *a += v;
        }
    }
    for a in acc.values_mut() {
        *a /= n;
    }
    acc
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ckpt = args.get(1).map(String::as_str).unwrap_or("/tmp/ckpt-3000.rdw");
    let model = load_weights(std::path::Path::new(ckpt)).unwrap();
    let schedule = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let held: Vec<(ImageGrid, ImageGrid)> = (0..8).map(|i| pair(50_000 + i)).collect();

    eprintln!("checkpoint {ckpt}");

    let eval = |kind: SamplerKind, steps: Option<usize>, eta: f64, variance: VarianceChoice, n_img: usize| -> (f64, f64) {
        let (mut p, mut s) = (0.0, 0.0);
        for (i, (clean, noisy)) in held.iter().take(n_img).enumerate() {
            let cfg = SamplerConfig {
                kind,
                num_inference_steps: steps,
                eta,
                variance,
                seed: 600 + i as u64,
            };
            let restored = sample(noisy, &model, &schedule, &cfg).unwrap();
            p += psnr(&restored.to_intensity(), &clean.to_intensity(), 1.0).unwrap();
            s += ssim(&restored.to_intensity(), &clean.to_intensity(), &SsimParams::default()).unwrap();
        }
        (p / n_img as f64, s / n_img as f64)
    };

    if args.get(2).map(String::as_str) != Some("avg") {
        for steps in [5usize, 10, 20, 50, 100, 200] {
            for eta in [0.0, 0.5, 1.0] {
                let (p, s) = eval(SamplerKind::Ddim, Some(steps), eta, VarianceChoice::Posterior, 8);
                eprintln!("  ddim-{steps:<3} eta {eta:.1}: psnr {p:6.2} ssim {s:.3}");
            }
        }
        let (p, s) = eval(SamplerKind::Ddpm, None, 0.0, VarianceChoice::Posterior, 4);
        eprintln!("  ddpm-1000 posterior: psnr {p:6.2} ssim {s:.3}");
        let (p, s) = eval(SamplerKind::Ddpm, None, 0.0, VarianceChoice::Beta, 4);
        eprintln!("  ddpm-1000 beta:      psnr {p:6.2} ssim {s:.3}");
    }

    // Bias/variance split at the currently best-looking protocol: restore one
    // image with many seeds, compare single-seed error, seed-averaged error,
    // and across-seed spread.
    for (steps, eta) in [(50usize, 1.0), (20, 1.0)] {
        let mut singles = 0.0;
        let mut avgs_psnr = Vec::new();
        for (i, (clean, noisy)) in held.iter().take(4).enumerate() {
            let runs: Vec<ImageGrid> = (0..16u64)
                .map(|k| {
                    let cfg = SamplerConfig {
                        kind: SamplerKind::Ddim,
                        num_inference_steps: Some(steps),
                        eta,
                        variance: VarianceChoice::Posterior,
                        seed: 900 + 100 * i as u64 + k,
                    };
                    sample(noisy, &model, &schedule, &cfg).unwrap().to_intensity()
                })
                .collect();
            let clean_i = clean.to_intensity();
            singles += psnr(&runs[0], &clean_i, 1.0).unwrap() / 4.0;
            for k in [2usize, 4, 8, 16] {
                let avg = mean_image(&runs[..k]);
                let p = psnr(&avg, &clean_i, 1.0).unwrap();
                let s = ssim(&avg, &clean_i, &SsimParams::default()).unwrap();
                avgs_psnr.push((k, p, s));
            }
        }
        eprint!("  ddim-{steps} eta {eta:.1}: single {singles:6.2}");
        for k in [2usize, 4, 8, 16] {
            let p: f64 = avgs_psnr.iter().filter(|(kk, _, _)| *kk == k).map(|(_, p, _)| p).sum::<f64>() / 4.0;
            let s: f64 = avgs_psnr.iter().filter(|(kk, _, _)| *kk == k).map(|(_, _, s)| s).sum::<f64>() / 4.0;
            eprint!("  avg{k} {p:6.2}/{s:.3}");
        }
        eprintln!();
    }
}
