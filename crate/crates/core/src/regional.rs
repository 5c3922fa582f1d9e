//! Regional restoration: images of arbitrary size are denoised by sliding a
//! fixed `m x m` window with stride `n`, predicting noise per window, and
//! averaging the overlapping predictions into one full-image estimate per
//! reverse step. Each step then applies a single global update with one
//! shared noise draw, so window boundaries never receive independent noise.

use rand_chacha::ChaCha8Rng;

use crate::denoiser::DenoiserModel;
use crate::sampler::{chain_rngs, ddpm_step, run_reverse_chain, SamplerConfig, VarianceChoice};
use crate::{Error, ImageGrid, NoiseSchedule, Result, ValueDomain};

/// Where the windows go for one image size: the bottom/right padding that
/// makes the stride tile exactly, every window origin in row-major order,
/// and how many windows cover each padded pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    image_height: usize,
    image_width: usize,
    window: usize,
    stride: usize,
    pad_bottom: usize,
    pad_right: usize,
    origins: Vec<(usize, usize)>,
    coverage: Vec<u32>,
}

impl WindowPlan {
    pub fn image_height(&self) -> usize {
        self.image_height
    }

    pub fn image_width(&self) -> usize {
        self.image_width
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn pad_bottom(&self) -> usize {
        self.pad_bottom
    }

    pub fn pad_right(&self) -> usize {
        self.pad_right
    }

    pub fn padded_height(&self) -> usize {
        self.image_height + self.pad_bottom
    }

    pub fn padded_width(&self) -> usize {
        self.image_width + self.pad_right
    }

    /// Top-left corners of every window, row-major over the padded image.
    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    /// Per-pixel window counts on the padded image, row-major.
    pub fn coverage(&self) -> &[u32] {
        &self.coverage
    }

    pub fn coverage_at(&self, row: usize, col: usize) -> u32 {
        self.coverage[row * self.padded_width() + col]
    }
}

/// Computes the window layout for an `height x width` image restored with
/// `window`-sized tiles at `stride` spacing. The image is padded (by
/// symmetric reflection at restore time) on the bottom and right just enough
/// that windows tile it exactly; every padded pixel ends up covered by at
/// least one window.
pub fn plan_windows(height: usize, width: usize, window: usize, stride: usize) -> Result<WindowPlan> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidPlan(format!(
            "image dimensions must be positive, got {height}x{width}"
        )));
    }
    if stride == 0 || window == 0 || window % stride != 0 {
        return Err(Error::InvalidPlan(format!(
            "window must be a positive multiple of stride, got window {window}, stride {stride}"
        )));
    }
    let pad = |dim: usize| -> usize {
        if dim <= window {
            window - dim
        } else {
            (stride - (dim - window) % stride) % stride
        }
    };
    let pad_bottom = pad(height);
    let pad_right = pad(width);
    let ph = height + pad_bottom;
    let pw = width + pad_right;
    let rows = (ph - window) / stride + 1;
    let cols = (pw - window) / stride + 1;
    let mut origins = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            origins.push((r * stride, c * stride));
        }
    }
    let mut coverage = vec![0u32; ph * pw];
    for &(r0, c0) in &origins {
        for r in r0..r0 + window {
            for v in &mut coverage[r * pw + c0..r * pw + c0 + window] {
                *v += 1;
            }
        }
    }
    debug_assert!(coverage.iter().all(|&c| c >= 1));
    Ok(WindowPlan {
        image_height: height,
        image_width: width,
        window,
        stride,
        pad_bottom,
        pad_right,
        origins,
        coverage,
    })
}

/// Reusable state for fused noise prediction over one conditioning image:
/// the padded condition is computed once and shared by every reverse step.
pub struct RegionalEvaluator<'a> {
    plan: &'a WindowPlan,
    model: &'a DenoiserModel,
    schedule: &'a NoiseSchedule,
    cond_padded: ImageGrid,
    workers: usize,
}

impl<'a> RegionalEvaluator<'a> {
    pub fn new(
        plan: &'a WindowPlan,
        condition: &ImageGrid,
        model: &'a DenoiserModel,
        schedule: &'a NoiseSchedule,
        workers: usize,
    ) -> Result<Self> {
        if condition.height() != plan.image_height || condition.width() != plan.image_width {
            return Err(Error::ShapeMismatch {
                expected: (plan.image_height, plan.image_width, condition.channels()),
                got: condition.shape(),
                context: "RegionalEvaluator condition",
            });
        }
        Ok(RegionalEvaluator {
            plan,
            model,
            schedule,
            cond_padded: condition.pad_symmetric(plan.pad_bottom, plan.pad_right),
            workers: workers.max(1),
        })
    }

    /// Overlap-averaged noise estimate for the whole (unpadded) image at
    /// step `t`. Windows are evaluated in parallel in batches of `workers`,
    /// but always accumulated in row-major window order, so the result is
    /// bitwise independent of the worker count.
    pub fn epsilon(&self, x_t: &ImageGrid, t: usize) -> Result<ImageGrid> {
        let plan = self.plan;
        if x_t.height() != plan.image_height || x_t.width() != plan.image_width {
            return Err(Error::ShapeMismatch {
                expected: (plan.image_height, plan.image_width, x_t.channels()),
                got: x_t.shape(),
                context: "RegionalEvaluator latent",
            });
        }
        if x_t.channels() != self.cond_padded.channels() {
            return Err(Error::ShapeMismatch {
                expected: (
                    plan.image_height,
                    plan.image_width,
                    self.cond_padded.channels(),
                ),
                got: x_t.shape(),
                context: "RegionalEvaluator channels",
            });
        }
        let c = x_t.channels();
        let x_pad = x_t.pad_symmetric(plan.pad_bottom, plan.pad_right);
        let mut acc = ImageGrid::zeros(plan.padded_height(), plan.padded_width(), c, ValueDomain::Unconstrained)?;

        for chunk in plan.origins.chunks(self.workers) {
            let outs = self.predict_chunk(chunk, &x_pad, t)?;
            for (&(r0, c0), out) in chunk.iter().zip(&outs) {
                add_window(&mut acc, out, r0, c0);
            }
        }

        let pw = plan.padded_width();
        let values = acc.values_mut();
        for row in 0..plan.padded_height() {
            for col in 0..pw {
                let count = plan.coverage[row * pw + col] as f64;
                for ch in 0..c {
                    values[(row * pw + col) * c + ch] /= count;
                }
            }
        }
        acc.crop(plan.image_height, plan.image_width)
    }

    #[cfg(feature = "parallel")]
    fn predict_chunk(
        &self,
        chunk: &[(usize, usize)],
        x_pad: &ImageGrid,
        t: usize,
    ) -> Result<Vec<ImageGrid>> {
        use rayon::prelude::*;
        if self.workers == 1 || chunk.len() == 1 {
            return chunk
                .iter()
                .map(|&(r0, c0)| self.predict_window(x_pad, r0, c0, t))
                .collect();
        }
        chunk
            .par_iter()
            .map(|&(r0, c0)| self.predict_window(x_pad, r0, c0, t))
            .collect()
    }

    #[cfg(not(feature = "parallel"))]
    fn predict_chunk(
        &self,
        chunk: &[(usize, usize)],
        x_pad: &ImageGrid,
        t: usize,
    ) -> Result<Vec<ImageGrid>> {
        chunk
            .iter()
            .map(|&(r0, c0)| self.predict_window(x_pad, r0, c0, t))
            .collect()
    }

    fn predict_window(&self, x_pad: &ImageGrid, r0: usize, c0: usize, t: usize) -> Result<ImageGrid> {
        let m = self.plan.window;
        let xw = x_pad.window(r0, c0, m)?;
        let cw = self.cond_padded.window(r0, c0, m)?;
        self.model.predict(&xw, &cw, t, self.schedule)
    }
}

fn add_window(acc: &mut ImageGrid, win: &ImageGrid, r0: usize, c0: usize) {
    let (m, _, c) = win.shape();
    let aw = acc.width();
    let row_len = m * c;
    let acc_values = acc.values_mut();
    let win_values = win.values();
    for r in 0..m {
        let dst = ((r0 + r) * aw + c0) * c;
        let src = r * row_len;
        let dst_row = &mut acc_values[dst..dst + row_len];
        let src_row = &win_values[src..src + row_len];
        for (a, &v) in dst_row.iter_mut().zip(src_row) {
            *a += v;
        }
    }
}

/// Fused noise estimate at one step (see [`RegionalEvaluator::epsilon`]).
/// Prefer the evaluator when running many steps over one condition; this
/// re-pads the condition on every call.
pub fn regional_epsilon(
    x_t: &ImageGrid,
    condition: &ImageGrid,
    t: usize,
    model: &DenoiserModel,
    plan: &WindowPlan,
    schedule: &NoiseSchedule,
) -> Result<ImageGrid> {
    schedule.check_timestep(t)?;
    RegionalEvaluator::new(plan, condition, model, schedule, default_workers())?.epsilon(x_t, t)
}

/// One global ancestral step driven by the fused estimate: every pixel,
/// whatever window(s) produced its noise value, shares the same `sigma_t`
/// and the caller's single noise grid.
#[allow(clippy::too_many_arguments)]
pub fn regional_sample_step(
    x_t: &ImageGrid,
    condition: &ImageGrid,
    t: usize,
    model: &DenoiserModel,
    plan: &WindowPlan,
    schedule: &NoiseSchedule,
    noise: &ImageGrid,
    variance: VarianceChoice,
) -> Result<ImageGrid> {
    let eps = regional_epsilon(x_t, condition, t, model, plan, schedule)?;
    ddpm_step(x_t, &eps, t, schedule, noise, variance)
}

/// Restores a full image of arbitrary size: plans the window layout, then
/// walks the configured reverse chain using the fused per-step estimate.
pub fn regional_despeckle(
    condition: &ImageGrid,
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    window: usize,
    stride: usize,
) -> Result<ImageGrid> {
    let (mut init_rng, mut noise_rng) = chain_rngs(cfg.seed, cfg.seed);
    regional_despeckle_with(
        condition,
        model,
        schedule,
        cfg,
        window,
        stride,
        default_workers(),
        &mut init_rng,
        &mut noise_rng,
        &mut |_, _, _| {},
    )
}

/// Posterior-mean restoration at arbitrary scale: averages `chains`
/// independent regional chains, each re-seeded from `cfg.seed` plus its
/// chain index. `chains = 1` reproduces [`regional_despeckle`] exactly.
/// `progress` receives `(step_index, total_steps, t)` with step indices
/// running across all chains.
#[allow(clippy::too_many_arguments)]
pub fn regional_despeckle_averaged(
    condition: &ImageGrid,
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    window: usize,
    stride: usize,
    chains: usize,
    workers: usize,
    progress: &mut dyn FnMut(usize, usize, usize),
) -> Result<ImageGrid> {
    if chains == 0 {
        return Err(Error::InvalidConfig("chains must be at least 1".into()));
    }
    let mut acc: Option<ImageGrid> = None;
    for k in 0..chains {
        let seed = crate::sampler::chain_seed(cfg.seed, k);
        let chain_cfg = SamplerConfig {
            seed,
            ..cfg.clone()
        };
        let (mut init_rng, mut noise_rng) = chain_rngs(seed, seed);
        let steps_done = k;
        let out = regional_despeckle_with(
            condition,
            model,
            schedule,
            &chain_cfg,
            window,
            stride,
            workers,
            &mut init_rng,
            &mut noise_rng,
            &mut |i, total, t| progress(steps_done * total + i, chains * total, t),
        )?;
        acc = Some(match acc {
            None => out,
            Some(mut a) => {
                for (dst, &v) in a.values_mut().iter_mut().zip(out.values()) {
                    *dst += v;
                }
                a
            }
        });
    }
    let mut avg = acc.expect("chains >= 1");
    if chains > 1 {
        let n = chains as f64;
        for v in avg.values_mut() {
            *v /= n;
        }
    }
    Ok(avg)
}

/// As [`regional_despeckle`] with explicit worker count, rng streams, and a
/// `(step_index, total_steps, t)` progress callback.
#[allow(clippy::too_many_arguments)]
pub fn regional_despeckle_with(
    condition: &ImageGrid,
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    window: usize,
    stride: usize,
    workers: usize,
    init_rng: &mut ChaCha8Rng,
    noise_rng: &mut ChaCha8Rng,
    progress: &mut dyn FnMut(usize, usize, usize),
) -> Result<ImageGrid> {
    let plan = plan_windows(condition.height(), condition.width(), window, stride)?;
    let evaluator = RegionalEvaluator::new(&plan, condition, model, schedule, workers)?;
    run_reverse_chain(
        condition.shape(),
        schedule,
        cfg,
        &mut |x, t| evaluator.epsilon(x, t),
        init_rng,
        noise_rng,
        progress,
    )
}

pub(crate) fn default_workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::OracleGaussianPrior;
    use crate::sampler::{sample, SamplerKind};
    use rand::SeedableRng;

    fn oracle() -> DenoiserModel {
        DenoiserModel::OracleGaussian(OracleGaussianPrior::new(0.3, 0.04).unwrap())
    }

    #[test]
    fn plan_exact_tiling_needs_no_padding() {
        let p = plan_windows(96, 96, 64, 16).unwrap();
        assert_eq!((p.pad_bottom(), p.pad_right()), (0, 0));
        assert_eq!(p.origins().len(), 9);
        assert_eq!(p.origins()[0], (0, 0));
        assert_eq!(*p.origins().last().unwrap(), (32, 32));
        // Corners see one window, the centre all nine.
        assert_eq!(p.coverage_at(0, 0), 1);
        assert_eq!(p.coverage_at(48, 48), 9);
    }

    #[test]
    fn plan_pads_small_and_misaligned_images() {
        let small = plan_windows(40, 50, 64, 16).unwrap();
        assert_eq!((small.pad_bottom(), small.pad_right()), (24, 14));
        assert_eq!(small.origins(), &[(0, 0)]);

        let mis = plan_windows(70, 70, 64, 16).unwrap();
        assert_eq!((mis.pad_bottom(), mis.pad_right()), (10, 10));
        assert_eq!(mis.padded_height(), 80);
        assert_eq!(mis.origins().len(), 4);

        let exact = plan_windows(64, 64, 64, 16).unwrap();
        assert_eq!((exact.pad_bottom(), exact.pad_right()), (0, 0));
        assert_eq!(exact.origins(), &[(0, 0)]);
    }

    #[test]
    fn interior_coverage_hits_full_overlap_count() {
        // With window 64 and stride 16 an interior pixel is covered by
        // (64/16)^2 = 16 windows.
        let p = plan_windows(128, 128, 64, 16).unwrap();
        assert_eq!(p.coverage_at(63, 63), 16);
        assert_eq!(p.coverage_at(64, 64), 16);
        assert!(p.coverage().iter().all(|&c| c >= 1));
    }

    #[test]
    fn plan_rejects_bad_geometry() {
        assert!(plan_windows(0, 10, 4, 2).is_err());
        assert!(plan_windows(10, 10, 4, 0).is_err());
        assert!(plan_windows(10, 10, 4, 5).is_err());
        assert!(plan_windows(10, 10, 0, 1).is_err());
        assert!(plan_windows(100, 100, 64, 24).is_err());
    }

    #[test]
    fn fused_epsilon_matches_direct_prediction_on_single_window() {
        // One window covering the whole image: averaging over one
        // prediction must be the prediction itself, bit for bit.
        let s = NoiseSchedule::linear(50, 1e-3, 0.04).unwrap();
        let model = oracle();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = ImageGrid::standard_normal(16, 16, 1, &mut rng).unwrap();
        let cond = ImageGrid::zeros(16, 16, 1, ValueDomain::Normalized).unwrap();
        let plan = plan_windows(16, 16, 16, 16).unwrap();
        let fused = regional_epsilon(&x, &cond, 25, &model, &plan, &s).unwrap();
        let direct = model.predict(&x, &cond, 25, &s).unwrap();
        assert_eq!(fused.values(), direct.values());
    }

    #[test]
    fn fused_epsilon_is_worker_count_invariant() {
        let s = NoiseSchedule::linear(50, 1e-3, 0.04).unwrap();
        let model = oracle();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let x = ImageGrid::standard_normal(40, 56, 1, &mut rng).unwrap();
        let cond = ImageGrid::standard_normal(40, 56, 1, &mut rng).unwrap();
        let plan = plan_windows(40, 56, 16, 8).unwrap();
        let mut results = Vec::new();
        for workers in [1usize, 2, 5, 16] {
            let ev = RegionalEvaluator::new(&plan, &cond, &model, &s, workers).unwrap();
            results.push(ev.epsilon(&x, 30).unwrap());
        }
        for r in &results[1..] {
            assert_eq!(results[0].values(), r.values());
        }
    }

    #[test]
    fn single_window_despeckle_equals_whole_image_sample() {
        let s = NoiseSchedule::linear(40, 1e-3, 0.05).unwrap();
        let model = oracle();
        let cond = ImageGrid::zeros(12, 12, 1, ValueDomain::Normalized).unwrap();
        let cfg = SamplerConfig {
            seed: 9,
            ..SamplerConfig::default()
        };
        let whole = sample(&cond, &model, &s, &cfg).unwrap();
        let regional = regional_despeckle(&cond, &model, &s, &cfg, 12, 12).unwrap();
        assert_eq!(whole.values(), regional.values());
    }

    #[test]
    fn constant_zero_denoiser_fuses_to_exact_zero() {
        let s = NoiseSchedule::linear(50, 1e-3, 0.04).unwrap();
        let model = DenoiserModel::ConstantZero;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x = ImageGrid::standard_normal(37, 29, 1, &mut rng).unwrap();
        let cond = ImageGrid::zeros(37, 29, 1, ValueDomain::Normalized).unwrap();
        for (window, stride) in [(16, 8), (16, 16), (8, 2)] {
            let plan = plan_windows(37, 29, window, stride).unwrap();
            let eps = regional_epsilon(&x, &cond, 25, &model, &plan, &s).unwrap();
            assert!(eps.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn pointwise_denoiser_fuses_to_its_full_image_prediction() {
        // The oracle's estimate at a pixel depends only on that pixel, so
        // every window covering it contributes the identical value and the
        // overlap average must reproduce the plain full-image prediction,
        // padding and cropping included.
        let s = NoiseSchedule::linear(50, 1e-3, 0.04).unwrap();
        let model = oracle();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let x = ImageGrid::standard_normal(43, 50, 1, &mut rng).unwrap();
        let cond = ImageGrid::zeros(43, 50, 1, ValueDomain::Normalized).unwrap();
        let plan = plan_windows(43, 50, 16, 8).unwrap();
        assert!(plan.pad_bottom() > 0 && plan.pad_right() > 0);

        let fused = regional_epsilon(&x, &cond, 20, &model, &plan, &s).unwrap();
        let direct = model.predict(&x, &cond, 20, &s).unwrap();
        let worst = fused
            .values()
            .iter()
            .zip(direct.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-6, "fused estimate drifted from pointwise prediction by {worst:e}");

        let noise = ImageGrid::standard_normal(43, 50, 1, &mut rng).unwrap();
        let stepped = regional_sample_step(
            &x,
            &cond,
            20,
            &model,
            &plan,
            &s,
            &noise,
            VarianceChoice::Posterior,
        )
        .unwrap();
        let global = ddpm_step(&x, &direct, 20, &s, &noise, VarianceChoice::Posterior).unwrap();
        let worst_step = stepped
            .values()
            .iter()
            .zip(global.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst_step <= 1e-6, "regional step drifted from global step by {worst_step:e}");
    }

    #[test]
    fn fused_epsilon_matches_brute_force_overlap_average() {
        let s = NoiseSchedule::linear(50, 1e-3, 0.04).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let raw = ImageGrid::standard_normal(1, crate::denoiser::TinyCnn::new(1, 0).unwrap().param_count(), 1, &mut rng).unwrap();
        let params: Vec<f64> = raw.values().iter().map(|v| v * 0.05).collect();
        let cnn = crate::denoiser::TinyCnn::from_params(1, 64, 0, params).unwrap();
        let model = DenoiserModel::TinyCnn(cnn);

        let x = ImageGrid::standard_normal(96, 96, 1, &mut rng).unwrap();
        let cond = ImageGrid::standard_normal(96, 96, 1, &mut rng).unwrap();
        let plan = plan_windows(96, 96, 64, 16).unwrap();
        assert_eq!(plan.origins().len(), 9);

        let fused = regional_epsilon(&x, &cond, 30, &model, &plan, &s).unwrap();

        // Reference: materialize all nine window outputs, then form each
        // pixel's mean by summing contributions in row-major window order.
        let mut sums = vec![0.0f64; 96 * 96];
        for &(r0, c0) in plan.origins() {
            let xw = x.window(r0, c0, 64).unwrap();
            let cw = cond.window(r0, c0, 64).unwrap();
            let out = model.predict(&xw, &cw, 30, &s).unwrap();
            for r in 0..64 {
                for c in 0..64 {
                    sums[(r0 + r) * 96 + c0 + c] += out.get(r, c, 0);
                }
            }
        }
        for (i, v) in sums.iter_mut().enumerate() {
            *v /= plan.coverage_at(i / 96, i % 96) as f64;
        }
        assert_eq!(fused.values(), &sums[..]);
    }

    #[test]
    fn single_window_step_matches_global_step_bitwise() {
        let s = NoiseSchedule::linear(50, 1e-3, 0.04).unwrap();
        let model = oracle();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let x = ImageGrid::standard_normal(16, 16, 1, &mut rng).unwrap();
        let cond = ImageGrid::zeros(16, 16, 1, ValueDomain::Normalized).unwrap();
        let noise = ImageGrid::standard_normal(16, 16, 1, &mut rng).unwrap();
        let plan = plan_windows(16, 16, 16, 16).unwrap();
        let regional = regional_sample_step(
            &x,
            &cond,
            30,
            &model,
            &plan,
            &s,
            &noise,
            VarianceChoice::Posterior,
        )
        .unwrap();
        let eps = model.predict(&x, &cond, 30, &s).unwrap();
        let global = ddpm_step(&x, &eps, 30, &s, &noise, VarianceChoice::Posterior).unwrap();
        assert_eq!(regional.values(), global.values());
    }

    #[test]
    fn per_window_noise_chains_reintroduce_seams() {
        // Negative control: giving every window its own noise stream (and
        // hence its own chain) must score strictly worse on the seam metric
        // than the fused estimate with one shared draw per step.
        let s = NoiseSchedule::linear(40, 1e-3, 0.04).unwrap();
        let clean = crate::synth::toy_texture(16, 16, 3).unwrap();
        let flat16 = ImageGrid::zeros(16, 16, 1, ValueDomain::Normalized).unwrap();
        let mut model = DenoiserModel::tiny_cnn(1, 7).unwrap();
        let train_cfg = crate::train::TrainConfig {
            learning_rate: 1e-2,
            batch_size: 1,
            iterations: 300,
            seed: 11,
            ..crate::train::TrainConfig::default()
        };
        let mut trainer = crate::train::Trainer::new(train_cfg, &model).unwrap();
        trainer
            .run(&mut model, &[(clean, flat16)], &s, 300, |_, _| {})
            .unwrap();

        let cond = ImageGrid::zeros(64, 64, 1, ValueDomain::Normalized).unwrap();
        let cfg = SamplerConfig {
            seed: 5,
            ..SamplerConfig::default()
        };
        let correct = regional_despeckle(&cond, &model, &s, &cfg, 16, 8).unwrap();

        let plan = plan_windows(64, 64, 16, 8).unwrap();
        let mut acc = ImageGrid::zeros(64, 64, 1, ValueDomain::Unconstrained).unwrap();
        for (i, &(r0, c0)) in plan.origins().iter().enumerate() {
            let cw = cond.window(r0, c0, 16).unwrap();
            let tile_cfg = SamplerConfig {
                seed: 1_000 + i as u64,
                ..SamplerConfig::default()
            };
            let tile = sample(&cw, &model, &s, &tile_cfg).unwrap();
            add_window(&mut acc, &tile, r0, c0);
        }
        for (i, v) in acc.values_mut().iter_mut().enumerate() {
            *v /= plan.coverage_at(i / 64, i % 64) as f64;
        }

        let r_correct = crate::metrics::seam_ratio(&correct, &plan).unwrap();
        let r_buggy = crate::metrics::seam_ratio(&acc, &plan).unwrap();
        assert!(
            r_buggy > r_correct,
            "per-window noise should worsen the seam score: buggy {r_buggy:.4} vs correct {r_correct:.4}"
        );
    }

    #[test]
    fn one_chain_regional_average_matches_plain_despeckle() {
        let s = NoiseSchedule::linear(40, 1e-3, 0.05).unwrap();
        let model = oracle();
        let cond = ImageGrid::zeros(20, 14, 1, ValueDomain::Normalized).unwrap();
        let cfg = SamplerConfig {
            seed: 31,
            ..SamplerConfig::default()
        };
        let plain = regional_despeckle(&cond, &model, &s, &cfg, 8, 4).unwrap();
        let averaged = regional_despeckle_averaged(
            &cond, &model, &s, &cfg, 8, 4, 1, 1, &mut |_, _, _| {},
        )
        .unwrap();
        assert_eq!(plain.values(), averaged.values());

        assert!(matches!(
            regional_despeckle_averaged(&cond, &model, &s, &cfg, 8, 4, 0, 1, &mut |_, _, _| {}),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn multi_chain_regional_average_is_deterministic_and_reports_progress() {
        let s = NoiseSchedule::linear(30, 1e-3, 0.05).unwrap();
        let model = oracle();
        let cond = ImageGrid::zeros(12, 12, 1, ValueDomain::Normalized).unwrap();
        let cfg = SamplerConfig {
            kind: SamplerKind::Ddim,
            num_inference_steps: Some(6),
            eta: 1.0,
            ..SamplerConfig::default()
        };
        let mut seen = Vec::new();
        let first = regional_despeckle_averaged(
            &cond,
            &model,
            &s,
            &cfg,
            12,
            6,
            3,
            1,
            &mut |i, total, _| seen.push((i, total)),
        )
        .unwrap();
        assert_eq!(seen.len(), 18);
        assert!(seen.iter().all(|&(_, total)| total == 18));
        assert_eq!(seen.first(), Some(&(0, 18)));
        assert_eq!(seen.last(), Some(&(17, 18)));

        let second = regional_despeckle_averaged(
            &cond, &model, &s, &cfg, 12, 6, 3, 1, &mut |_, _, _| {},
        )
        .unwrap();
        assert_eq!(first.values(), second.values());
    }

    #[test]
    fn despeckle_handles_ddim_and_padding() {
        let s = NoiseSchedule::linear(60, 1e-3, 0.04).unwrap();
        let model = oracle();
        let cond = ImageGrid::zeros(21, 13, 1, ValueDomain::Normalized).unwrap();
        let cfg = SamplerConfig {
            kind: SamplerKind::Ddim,
            num_inference_steps: Some(8),
            eta: 0.5,
            variance: VarianceChoice::Beta,
            seed: 3,
        };
        let out = regional_despeckle(&cond, &model, &s, &cfg, 8, 4).unwrap();
        assert_eq!(out.shape(), (21, 13, 1));
        assert!(out.values().iter().all(|v| v.is_finite()));
        let again = regional_despeckle(&cond, &model, &s, &cfg, 8, 4).unwrap();
        assert_eq!(out.values(), again.values());
    }
}
