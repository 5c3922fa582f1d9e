//! Reverse-process samplers. Both the ancestral (DDPM) and deterministic-
//! skip (DDIM) variants drive an arbitrary noise predictor; the regional
//! engine reuses the same chain driver with a fused predictor, so a
//! one-window regional run and a plain call produce identical bits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::denoiser::DenoiserModel;
use crate::diffusion::{posterior_mean, predict_x0_from_eps};
use crate::{Error, ImageGrid, NoiseSchedule, Result, ValueDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Ddpm,
    Ddim,
}

/// Which per-step variance the ancestral sampler injects: the schedule's
/// `beta_t` or the (smaller) posterior variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceChoice {
    Beta,
    Posterior,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Number of reverse steps. `None` walks the full schedule. DDPM accepts
    /// only the full chain; DDIM accepts any `1..=T`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_inference_steps: Option<usize>,
    /// DDIM stochasticity in `[0, 1]`; `0` is fully deterministic, `1`
    /// matches the ancestral posterior variance.
    pub eta: f64,
    pub variance: VarianceChoice,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Ddpm,
            num_inference_steps: None,
            eta: 0.0,
            variance: VarianceChoice::Beta,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, t_max: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidConfig(format!(
                "eta must be in [0, 1], got {}",
                self.eta
            )));
        }
        match (self.kind, self.num_inference_steps) {
            (SamplerKind::Ddpm, Some(k)) if k != t_max => Err(Error::InvalidConfig(format!(
                "ddpm walks the full chain: steps must be {t_max}, got {k}"
            ))),
            (SamplerKind::Ddim, Some(k)) if k == 0 || k > t_max => {
                Err(Error::InvalidConfig(format!(
                    "ddim steps must be in 1..={t_max}, got {k}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn steps(&self, t_max: usize) -> usize {
        self.num_inference_steps.unwrap_or(t_max)
    }
}

/// One ancestral reverse step: posterior mean plus `sigma_t * noise`, where
/// `sigma_t^2` is chosen by `variance`. The final step (`t = 1`) is
/// deterministic and rejects a non-zero noise grid.
pub fn ddpm_step(
    x_t: &ImageGrid,
    eps_hat: &ImageGrid,
    t: usize,
    schedule: &NoiseSchedule,
    noise: &ImageGrid,
    variance: VarianceChoice,
) -> Result<ImageGrid> {
    schedule.check_timestep(t)?;
    x_t.expect_same_shape(noise, "ddpm_step noise")?;
    let mean = posterior_mean(x_t, eps_hat, t, schedule)?;
    if t == 1 {
        if noise.values().iter().any(|&v| v != 0.0) {
            return Err(Error::NoiseAtFinalStep);
        }
        return Ok(mean);
    }
    let sigma = match variance {
        VarianceChoice::Beta => schedule.beta(t).sqrt(),
        VarianceChoice::Posterior => schedule.posterior_variance(t).sqrt(),
    };
    mean.zip_map(noise, ValueDomain::Unconstrained, |m, n| m + sigma * n)
}

/// One DDIM step from `t` to `t_prev` (`t_prev = 0` produces the final
/// estimate of the clean image). With `eta = 1` and `t_prev = t - 1` the
/// injected variance equals the ancestral posterior variance; with
/// `eta = 0` the step is deterministic.
pub fn ddim_step(
    x_t: &ImageGrid,
    eps_hat: &ImageGrid,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
    noise: &ImageGrid,
    eta: f64,
) -> Result<ImageGrid> {
    schedule.check_timestep(t)?;
    if t_prev >= t {
        return Err(Error::InvalidConfig(format!(
            "ddim requires t_prev < t, got {t_prev} >= {t}"
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidConfig(format!(
            "eta must be in [0, 1], got {eta}"
        )));
    }
    x_t.expect_same_shape(noise, "ddim_step noise")?;
    let abar_t = schedule.alpha_bar(t);
    let abar_prev = if t_prev == 0 {
        1.0
    } else {
        schedule.alpha_bar(t_prev)
    };
    let x0_hat = predict_x0_from_eps(x_t, eps_hat, t, schedule)?;
    let sigma = eta
        * ((1.0 - abar_prev) / (1.0 - abar_t)).sqrt()
        * (1.0 - abar_t / abar_prev).sqrt();
    let dir = (1.0 - abar_prev - sigma * sigma).max(0.0).sqrt();
    let signal = abar_prev.sqrt();
    let mut out = ImageGrid::zeros(x_t.height(), x_t.width(), x_t.channels(), ValueDomain::Unconstrained)?;
    if sigma == 0.0 {
        for ((o, &x0), &e) in out
            .values_mut()
            .iter_mut()
            .zip(x0_hat.values())
            .zip(eps_hat.values())
        {
            *o = signal * x0 + dir * e;
        }
    } else {
        for (((o, &x0), &e), &n) in out
            .values_mut()
            .iter_mut()
            .zip(x0_hat.values())
            .zip(eps_hat.values())
            .zip(noise.values())
        {
            *o = signal * x0 + dir * e + sigma * n;
        }
    }
    Ok(out)
}

/// Descending timesteps for a `k`-step DDIM run over a `t_max`-step
/// schedule: a uniformly spaced grid from `t_max` down to 1, rounded to
/// integers. `k = t_max` yields every step; `k = 1` jumps straight from
/// `t_max`.
pub fn inference_timesteps(t_max: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > t_max {
        return Err(Error::InvalidConfig(format!(
            "cannot take {k} inference steps over a {t_max}-step schedule"
        )));
    }
    if k == 1 {
        return Ok(vec![t_max]);
    }
    let stride = (t_max - 1) as f64 / (k - 1) as f64;
    let ts: Vec<usize> = (0..k)
        .map(|i| (t_max as f64 - stride * i as f64).round() as usize)
        .collect();
    debug_assert!(ts.windows(2).all(|w| w[0] > w[1]));
    debug_assert_eq!(*ts.first().unwrap(), t_max);
    debug_assert_eq!(*ts.last().unwrap(), 1);
    Ok(ts)
}

/// Independent streams for chain initialisation and per-step noise, so the
/// initial latent can be held fixed while step noise varies (or vice versa).
pub fn chain_rngs(init_seed: u64, noise_seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut init = ChaCha8Rng::seed_from_u64(init_seed);
    init.set_stream(1);
    let mut noise = ChaCha8Rng::seed_from_u64(noise_seed);
    noise.set_stream(2);
    (init, noise)
}

/// Walks the full reverse chain with an arbitrary per-step noise estimate:
/// `eps_source(x_t, t)` is the plain model for whole-image sampling and the
/// overlap-fused estimate for regional restoration. Output is clamped into
/// `[-1, 1]` once, at the end.
pub(crate) fn run_reverse_chain(
    shape: (usize, usize, usize),
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    eps_source: &mut dyn FnMut(&ImageGrid, usize) -> Result<ImageGrid>,
    init_rng: &mut ChaCha8Rng,
    noise_rng: &mut ChaCha8Rng,
    progress: &mut dyn FnMut(usize, usize, usize),
) -> Result<ImageGrid> {
    let t_max = schedule.len();
    cfg.validate(t_max)?;
    let (h, w, c) = shape;
    let zero = ImageGrid::zeros(h, w, c, ValueDomain::Unconstrained)?;
    let mut x = ImageGrid::standard_normal(h, w, c, init_rng)?;
    match cfg.kind {
        SamplerKind::Ddpm => {
            let total = t_max;
            for (i, t) in (1..=t_max).rev().enumerate() {
                let eps_hat = eps_source(&x, t)?;
                let noise;
                let noise_ref = if t > 1 {
                    noise = ImageGrid::standard_normal(h, w, c, noise_rng)?;
                    &noise
                } else {
                    &zero
                };
                x = ddpm_step(&x, &eps_hat, t, schedule, noise_ref, cfg.variance)?;
                progress(i, total, t);
            }
        }
        SamplerKind::Ddim => {
            let ts = inference_timesteps(t_max, cfg.steps(t_max))?;
            let total = ts.len();
            for i in 0..total {
                let t = ts[i];
                let t_prev = if i + 1 < total { ts[i + 1] } else { 0 };
                let eps_hat = eps_source(&x, t)?;
                let noise;
                let noise_ref = if cfg.eta > 0.0 && t_prev > 0 {
                    noise = ImageGrid::standard_normal(h, w, c, noise_rng)?;
                    &noise
                } else {
                    &zero
                };
                x = ddim_step(&x, &eps_hat, t, t_prev, schedule, noise_ref, cfg.eta)?;
                progress(i, total, t);
            }
        }
    }
    x.check_finite("reverse chain output")?;
    x.clamp_normalized();
    Ok(x)
}

/// Runs the configured sampler over a whole image (no tiling): the model
/// sees the full conditioning grid each step.
pub fn sample(
    condition: &ImageGrid,
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<ImageGrid> {
    let (mut init_rng, mut noise_rng) = chain_rngs(cfg.seed, cfg.seed);
    sample_with_rngs(
        condition,
        model,
        schedule,
        cfg,
        &mut init_rng,
        &mut noise_rng,
        &mut |_, _, _| {},
    )
}

/// Seed for the `k`-th chain of an averaged run: chain 0 keeps the
/// caller's seed, so a one-chain average is bitwise the plain sampler.
pub(crate) fn chain_seed(base: u64, k: usize) -> u64 {
    base.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Posterior-mean despeckling: runs `chains` independent reverse chains
/// (each seeded from `cfg.seed` plus its chain index) and averages the
/// outputs. A single posterior draw keeps the chain's own randomness as
/// residual grain; the average suppresses it while the shared conditioning
/// keeps structure. `chains = 1` reproduces [`sample`] exactly.
pub fn sample_averaged(
    condition: &ImageGrid,
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    chains: usize,
) -> Result<ImageGrid> {
    if chains == 0 {
        return Err(Error::InvalidConfig("chains must be at least 1".into()));
    }
    let mut acc: Option<ImageGrid> = None;
    for k in 0..chains {
        let chain_cfg = SamplerConfig {
            seed: chain_seed(cfg.seed, k),
            ..cfg.clone()
        };
        let out = sample(condition, model, schedule, &chain_cfg)?;
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

/// As [`sample`] but with caller-owned rng streams and a progress callback
/// `(step_index, total_steps, t)`.
pub fn sample_with_rngs(
    condition: &ImageGrid,
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    init_rng: &mut ChaCha8Rng,
    noise_rng: &mut ChaCha8Rng,
    progress: &mut dyn FnMut(usize, usize, usize),
) -> Result<ImageGrid> {
    run_reverse_chain(
        condition.shape(),
        schedule,
        cfg,
        &mut |x, t| model.predict(x, condition, t, schedule),
        init_rng,
        noise_rng,
        progress,
    )
}
