//! Noise-prediction training for [`TinyCnn`]: sample a timestep and a noise
//! grid per item, corrupt the clean image to that step, and regress the
//! network output onto the drawn noise with mean squared error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::denoiser::{DenoiserModel, TinyCnn};
use crate::diffusion::q_sample;
use crate::{Error, ImageGrid, NoiseSchedule, Result};

/// Adam moment-decay constants.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Hyperparameters of a training run. The defaults mirror the reference
/// setup: learning rate `2e-5`, batches of 4.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            batch_size: 4,
            iterations: 10_000,
            seed: 0,
            adam: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "adam parameters out of range: beta1={}, beta2={}, epsilon={}",
                a.beta1, a.beta2, a.epsilon
            )));
        }
        Ok(())
    }
}

/// Fixed `(timestep, noise)` draw for one batch item. Training samples these
/// from its rng; tests pin them to make losses pure functions of the
/// parameters.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub t: usize,
    pub eps: ImageGrid,
}

/// Mean-squared noise-prediction loss and its parameter gradient over a
/// batch. `batch` pairs clean images with their degraded conditioning;
/// `draws` supplies one `(t, eps)` per item. Items contribute to the sum in
/// batch order regardless of how many threads evaluate them, so the result
/// is bitwise reproducible.
pub fn batch_gradients(
    cnn: &TinyCnn,
    batch: &[(&ImageGrid, &ImageGrid)],
    draws: &[NoiseDraw],
    schedule: &NoiseSchedule,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() || batch.len() != draws.len() {
        return Err(Error::InvalidConfig(format!(
            "batch of {} items with {} noise draws",
            batch.len(),
            draws.len()
        )));
    }
    let per_item: Vec<Result<(f64, Vec<f64>)>> = map_items(batch, draws, |(x0, cond), draw| {
        item_gradients(cnn, x0, cond, draw, schedule)
    });

    let mut loss = 0.0;
    let mut grads = vec![0.0; cnn.param_count()];
    for item in per_item {
        let (l, g) = item?;
        loss += l;
        for (acc, v) in grads.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    loss *= scale;
    for g in &mut grads {
        *g *= scale;
    }
    Ok((loss, grads))
}

#[cfg(feature = "parallel")]
fn map_items<T: Send>(
    batch: &[(&ImageGrid, &ImageGrid)],
    draws: &[NoiseDraw],
    f: impl Fn((&ImageGrid, &ImageGrid), &NoiseDraw) -> T + Sync,
) -> Vec<T> {
    use rayon::prelude::*;
    batch
        .par_iter()
        .zip(draws.par_iter())
        .map(|(&pair, draw)| f(pair, draw))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn map_items<T>(
    batch: &[(&ImageGrid, &ImageGrid)],
    draws: &[NoiseDraw],
    f: impl Fn((&ImageGrid, &ImageGrid), &NoiseDraw) -> T,
) -> Vec<T> {
    batch
        .iter()
        .zip(draws.iter())
        .map(|(&pair, draw)| f(pair, draw))
        .collect()
}

fn item_gradients(
    cnn: &TinyCnn,
    x0: &ImageGrid,
    cond: &ImageGrid,
    draw: &NoiseDraw,
    schedule: &NoiseSchedule,
) -> Result<(f64, Vec<f64>)> {
    let x_t = q_sample(x0, draw.t, &draw.eps, schedule)?;
    let (pred, cache) = cnn.forward_cached(&x_t, cond, draw.t, schedule.len())?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let diff = pred.zip_map(&draw.eps, crate::ValueDomain::Unconstrained, |p, e| p - e)?;
    for &d in diff.values() {
        loss += d * d;
    }
    loss /= n;
    // d(mean of d^2)/d pred = 2 d / n
    let g_out = diff.map(crate::ValueDomain::Unconstrained, |d| 2.0 * d / n);
    let (grads, _) = cnn.backward(&cache, &g_out)?;
    Ok((loss, grads))
}

/// Owns the optimiser state and rng for a training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, model: &DenoiserModel) -> Result<Self> {
        cfg.validate()?;
        let cnn = model
            .as_tiny_cnn()
            .ok_or(Error::NotTrainable(model.kind_name()))?;
        let n = cnn.param_count();
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Trainer {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            rng,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Optimiser steps taken so far.
    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One optimisation step on an explicit batch of `(clean, degraded)`
    /// pairs. Draws `(t, eps)` per item, then applies an Adam update.
    /// Returns the batch loss before the update.
    pub fn train_step(
        &mut self,
        model: &mut DenoiserModel,
        batch: &[(&ImageGrid, &ImageGrid)],
        schedule: &NoiseSchedule,
    ) -> Result<f64> {
        let cnn = model
            .as_tiny_cnn()
            .ok_or(Error::NotTrainable("non-trainable model"))?;
        let draws: Vec<NoiseDraw> = batch
            .iter()
            .map(|(x0, _)| {
                let t = self.rng.random_range(1..=schedule.len());
                let (h, w, c) = x0.shape();
                let eps = ImageGrid::standard_normal(h, w, c, &mut self.rng)?;
                Ok(NoiseDraw { t, eps })
            })
            .collect::<Result<_>>()?;
        let (loss, grads) = batch_gradients(cnn, batch, &draws, schedule)?;
        self.apply_adam(model.as_tiny_cnn_mut().expect("checked above"), &grads);
        Ok(loss)
    }

    fn apply_adam(&mut self, cnn: &mut TinyCnn, grads: &[f64]) {
        self.step += 1;
        let a = self.cfg.adam;
        let lr = self.cfg.learning_rate;
        let bc1 = 1.0 - a.beta1.powi(self.step as i32);
        let bc2 = 1.0 - a.beta2.powi(self.step as i32);
        let params = cnn.params_mut();
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = a.beta1 * self.m[i] + (1.0 - a.beta1) * g;
            self.v[i] = a.beta2 * self.v[i] + (1.0 - a.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            let updated = params[i] - lr * m_hat / (v_hat.sqrt() + a.epsilon);
            params[i] = updated as f32 as f64;
        }
    }

    /// Runs `iterations` steps, drawing each batch uniformly (with
    /// replacement) from `dataset`. `progress` sees `(iteration, loss)`
    /// after every step. Returns the per-iteration losses.
    pub fn run(
        &mut self,
        model: &mut DenoiserModel,
        dataset: &[(ImageGrid, ImageGrid)],
        schedule: &NoiseSchedule,
        iterations: usize,
        mut progress: impl FnMut(usize, f64),
    ) -> Result<Vec<f64>> {
        if dataset.is_empty() {
            return Err(Error::InvalidConfig("training dataset is empty".into()));
        }
        let mut losses = Vec::with_capacity(iterations);
        for iter in 0..iterations {
            let batch: Vec<(&ImageGrid, &ImageGrid)> = (0..self.cfg.batch_size)
                .map(|_| {
                    let idx = self.rng.random_range(0..dataset.len());
                    (&dataset[idx].0, &dataset[idx].1)
                })
                .collect();
            let loss = self.train_step(model, &batch, schedule)?;
            progress(iter, loss);
            losses.push(loss);
        }
        Ok(losses)
    }
}
