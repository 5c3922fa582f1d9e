use std::io::Write;

use crate::{Error, Result};

/// Variance schedule for the diffusion chain plus every per-step quantity
/// derived from it. Timesteps are 1-based throughout the crate: `t = 1` is
/// the least-noisy step, `t = len()` the most. Internally each vector is
/// indexed `t - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    posterior_variances: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear schedule: `betas` interpolated from `beta_start` to `beta_end`
    /// inclusive over `t_steps` entries. Requires `t_steps >= 1` and
    /// `0 < beta_start <= beta_end < 1`.
    pub fn linear(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_steps == 0 {
            return Err(Error::InvalidSchedule("t_steps must be >= 1".into()));
        }
        if !(beta_start.is_finite() && beta_end.is_finite()) {
            return Err(Error::InvalidSchedule("beta bounds must be finite".into()));
        }
        if beta_start <= 0.0 || beta_end >= 1.0 || beta_start > beta_end {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let betas: Vec<f64> = if t_steps == 1 {
            vec![beta_start]
        } else {
            let step = (beta_end - beta_start) / (t_steps - 1) as f64;
            (0..t_steps)
                .map(|i| {
                    if i == t_steps - 1 {
                        beta_end
                    } else {
                        beta_start + step * i as f64
                    }
                })
                .collect()
        };
        Self::from_betas(betas)
    }

    /// Builds the derived quantities from an explicit `betas` vector.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidSchedule("betas must be non-empty".into()));
        }
        for (i, &b) in betas.iter().enumerate() {
            if !b.is_finite() || b <= 0.0 || b >= 1.0 {
                return Err(Error::InvalidSchedule(format!(
                    "betas[{i}] = {b} outside (0, 1)"
                )));
            }
            if i > 0 && b < betas[i - 1] {
                return Err(Error::InvalidSchedule(format!(
                    "betas must be non-decreasing, betas[{i}] = {b} < betas[{}] = {}",
                    i - 1,
                    betas[i - 1]
                )));
            }
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut prod = 1.0;
        for &a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        // Posterior variance of x_{t-1} given (x_t, x_0):
        // (1 - abar_{t-1}) / (1 - abar_t) * beta_t, with abar_0 taken as 1,
        // which makes the t = 1 entry exactly zero.
        let posterior_variances: Vec<f64> = (0..betas.len())
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                (1.0 - prev) / (1.0 - alpha_bars[i]) * betas[i]
            })
            .collect();
        Ok(NoiseSchedule {
            betas,
            alphas,
            alpha_bars,
            posterior_variances,
        })
    }

    /// Number of diffusion steps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// Errors unless `1 <= t <= len()`.
    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            Err(Error::TimestepOutOfRange {
                t,
                t_max: self.len(),
            })
        } else {
            Ok(())
        }
    }

    /// `beta_t`. Panics if `t` is out of range; validate external input with
    /// [`check_timestep`](Self::check_timestep) first.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `alpha_t = 1 - beta_t`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// `abar_t`, the product of `alpha_1 ..= alpha_t`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// `abar_{t-1}` with the convention `abar_0 = 1`.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t <= 1 {
            1.0
        } else {
            self.alpha_bars[t - 2]
        }
    }

    /// Posterior variance at step `t`; zero at `t = 1`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.posterior_variances[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn posterior_variances(&self) -> &[f64] {
        &self.posterior_variances
    }

    /// Writes `t,beta,alpha,alpha_bar,posterior_variance` rows (with header)
    /// for plotting or inspection.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,beta,alpha,alpha_bar,posterior_variance")?;
        for t in 1..=self.len() {
            writeln!(
                out,
                "{t},{},{},{},{}",
                self.beta(t),
                self.alpha(t),
                self.alpha_bar(t),
                self.posterior_variance(t)
            )?;
        }
        Ok(())
    }
}
