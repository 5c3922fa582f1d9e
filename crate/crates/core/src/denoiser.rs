//! Noise predictors. Every variant consumes the current latent `x_t`, the
//! degraded image as conditioning, and the timestep, and returns an estimate
//! of the standard normal noise that produced `x_t`.

mod cnn;

pub use cnn::{ForwardCache, TinyCnn, HIDDEN_CHANNELS, KERNEL_SIZE, TIME_EMBED_DIM};

use crate::{Error, ImageGrid, NoiseSchedule, Result, ValueDomain};

/// Closed-form noise estimator for the case where the clean image is known to
/// be i.i.d. `N(mu0, s0_sq)` per pixel. Under the forward marginal the pair
/// `(x_0, x_t)` is jointly Gaussian, so the conditional mean of `x_0` — and
/// from it the implied noise — has an exact affine expression. Used as ground
/// truth when validating samplers; it ignores the conditioning image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGaussianPrior {
    mu0: f64,
    s0_sq: f64,
}

impl OracleGaussianPrior {
    pub fn new(mu0: f64, s0_sq: f64) -> Result<Self> {
        if !mu0.is_finite() || !s0_sq.is_finite() || s0_sq <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "Gaussian prior needs finite mu0 and s0_sq > 0, got ({mu0}, {s0_sq})"
            )));
        }
        Ok(OracleGaussianPrior { mu0, s0_sq })
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn s0_sq(&self) -> f64 {
        self.s0_sq
    }

    /// `E[x_0 | x_t]` under the prior, applied element-wise.
    pub fn posterior_x0_mean(&self, x_t: &ImageGrid, t: usize, schedule: &NoiseSchedule) -> Result<ImageGrid> {
        schedule.check_timestep(t)?;
        let abar = schedule.alpha_bar(t);
        let denom = abar * self.s0_sq + (1.0 - abar);
        let gain = abar.sqrt() * self.s0_sq / denom;
        let bias = (1.0 - abar) * self.mu0 / denom;
        Ok(x_t.map(ValueDomain::Unconstrained, |x| gain * x + bias))
    }

    fn predict(&self, x_t: &ImageGrid, t: usize, schedule: &NoiseSchedule) -> Result<ImageGrid> {
        let x0_mean = self.posterior_x0_mean(x_t, t, schedule)?;
        let abar = schedule.alpha_bar(t);
        let sqrt_abar = abar.sqrt();
        let inv_noise = 1.0 / (1.0 - abar).sqrt();
        x_t.zip_map(&x0_mean, ValueDomain::Unconstrained, |x, m| {
            (x - sqrt_abar * m) * inv_noise
        })
    }
}

/// The noise predictors a sampler can drive.
#[derive(Debug, Clone)]
pub enum DenoiserModel {
    /// Exact predictor for a known per-pixel Gaussian prior.
    OracleGaussian(OracleGaussianPrior),
    /// Trainable convolutional predictor.
    TinyCnn(TinyCnn),
    /// Always predicts zero noise; handy as a degenerate baseline.
    ConstantZero,
}

impl DenoiserModel {
    /// Oracle predictor for an i.i.d. Gaussian prior `N(mu0, s0_sq)`.
    pub fn oracle_gaussian(mu0: f64, s0_sq: f64) -> Result<DenoiserModel> {
        Ok(DenoiserModel::OracleGaussian(OracleGaussianPrior::new(
            mu0, s0_sq,
        )?))
    }

    /// Freshly initialized trainable predictor.
    pub fn tiny_cnn(channels: usize, seed: u64) -> Result<DenoiserModel> {
        Ok(DenoiserModel::TinyCnn(TinyCnn::new(channels, seed)?))
    }

    /// Estimates the noise in `x_t`. `x_t` and `condition` must share shape;
    /// the conditioning image rides along even for variants that ignore it so
    /// every predictor has the same call signature.
    pub fn predict(
        &self,
        x_t: &ImageGrid,
        condition: &ImageGrid,
        t: usize,
        schedule: &NoiseSchedule,
    ) -> Result<ImageGrid> {
        x_t.expect_same_shape(condition, "DenoiserModel::predict")?;
        match self {
            DenoiserModel::OracleGaussian(prior) => prior.predict(x_t, t, schedule),
            DenoiserModel::TinyCnn(cnn) => cnn.predict(x_t, condition, t, schedule.len()),
            DenoiserModel::ConstantZero => {
                schedule.check_timestep(t)?;
                let (h, w, c) = x_t.shape();
                ImageGrid::zeros(h, w, c, ValueDomain::Unconstrained)
            }
        }
    }

    /// Window side length the model was trained on, when that applies.
    pub fn receptive_window(&self) -> Option<usize> {
        match self {
            DenoiserModel::TinyCnn(cnn) => Some(cnn.receptive()),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            DenoiserModel::TinyCnn(cnn) => cnn.param_count(),
            _ => 0,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DenoiserModel::OracleGaussian(_) => "oracle_gaussian",
            DenoiserModel::TinyCnn(_) => "tiny_cnn",
            DenoiserModel::ConstantZero => "constant_zero",
        }
    }

    pub fn as_tiny_cnn(&self) -> Option<&TinyCnn> {
        match self {
            DenoiserModel::TinyCnn(cnn) => Some(cnn),
            _ => None,
        }
    }

    pub fn as_tiny_cnn_mut(&mut self) -> Option<&mut TinyCnn> {
        match self {
            DenoiserModel::TinyCnn(cnn) => Some(cnn),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::q_sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oracle_rejects_degenerate_prior() {
        assert!(OracleGaussianPrior::new(0.3, 0.0).is_err());
        assert!(OracleGaussianPrior::new(0.3, -1.0).is_err());
        assert!(OracleGaussianPrior::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn oracle_posterior_mean_interpolates_prior_and_observation() {
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let prior = OracleGaussianPrior::new(0.3, 0.04).unwrap();
        // At t = 1000 almost no signal survives, so the conditional mean is
        // pulled nearly all the way to the prior mean.
        let x = ImageGrid::constant(2, 2, 1, ValueDomain::Unconstrained, 5.0).unwrap();
        let m = prior.posterior_x0_mean(&x, 1000, &s).unwrap();
        for &v in m.values() {
            assert!((v - 0.3).abs() < 0.02, "{v}");
        }
        // At t = 1 the observation dominates: x_1 of a clean value 0.3 with
        // zero noise recovers nearly 0.3 with tiny shrinkage toward the mean.
        let x0 = ImageGrid::constant(2, 2, 1, ValueDomain::Unconstrained, 0.5).unwrap();
        let m1 = prior.posterior_x0_mean(&x0, 1, &s).unwrap();
        for &v in m1.values() {
            assert!((v - 0.5).abs() < 0.01, "{v}");
        }
    }

    #[test]
    fn oracle_predicts_exact_noise_in_expectation() {
        // For a single draw the oracle cannot recover the realised noise, but
        // plugging its estimate back into the x0 formula must land exactly on
        // the conditional mean (algebraic identity).
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let prior = OracleGaussianPrior::new(0.3, 0.04).unwrap();
        let model = DenoiserModel::OracleGaussian(prior);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = ImageGrid::constant(3, 3, 1, ValueDomain::Normalized, 0.3).unwrap();
        let eps = ImageGrid::standard_normal(3, 3, 1, &mut rng).unwrap();
        let cond = ImageGrid::zeros(3, 3, 1, ValueDomain::Normalized).unwrap();
        for t in [1usize, 77, 500, 1000] {
            let x_t = q_sample(&x0, t, &eps, &s).unwrap();
            let eps_hat = model.predict(&x_t, &cond, t, &s).unwrap();
            let x0_back = crate::diffusion::predict_x0_from_eps(&x_t, &eps_hat, t, &s).unwrap();
            let direct = prior.posterior_x0_mean(&x_t, t, &s).unwrap();
            for (a, b) in x0_back.values().iter().zip(direct.values()) {
                assert!((a - b).abs() < 1e-9, "t={t}");
            }
        }
    }

    #[test]
    fn constant_zero_predicts_zeros() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.02).unwrap();
        let x = ImageGrid::constant(2, 3, 1, ValueDomain::Unconstrained, 1.5).unwrap();
        let c = ImageGrid::zeros(2, 3, 1, ValueDomain::Normalized).unwrap();
        let e = DenoiserModel::ConstantZero.predict(&x, &c, 5, &s).unwrap();
        assert!(e.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_with_uninformative_prior_estimates_no_noise() {
        // As the prior variance blows up the posterior collapses onto the
        // observation, so the implied noise estimate vanishes.
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let prior = OracleGaussianPrior::new(0.3, 1e12).unwrap();
        let model = DenoiserModel::OracleGaussian(prior);
        let cond = ImageGrid::zeros(2, 2, 1, ValueDomain::Normalized).unwrap();
        for t in [1usize, 400, 1000] {
            let x = ImageGrid::constant(2, 2, 1, ValueDomain::Unconstrained, 0.8).unwrap();
            let e = model.predict(&x, &cond, t, &s).unwrap();
            for &v in e.values() {
                assert!(v.abs() < 1e-5, "t={t}: {v}");
            }
        }
    }

    #[test]
    fn oracle_prior_mean_observation_is_a_fixed_point() {
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let cond = ImageGrid::zeros(2, 2, 1, ValueDomain::Normalized).unwrap();

        // mu0 = 0: x_t = sqrt(abar)*mu0 = 0 gives an exactly zero estimate.
        let centered = DenoiserModel::oracle_gaussian(0.0, 0.04).unwrap();
        let zero = ImageGrid::zeros(2, 2, 1, ValueDomain::Unconstrained).unwrap();
        for t in [1usize, 250, 1000] {
            let e = centered.predict(&zero, &cond, t, &s).unwrap();
            assert!(e.values().iter().all(|&v| v == 0.0), "t={t}");
        }

        // General mu0: the same fixed point up to floating-point rounding.
        let prior = DenoiserModel::oracle_gaussian(0.3, 0.04).unwrap();
        for t in [1usize, 250, 1000] {
            let v = s.alpha_bar(t).sqrt() * 0.3;
            let x = ImageGrid::constant(2, 2, 1, ValueDomain::Unconstrained, v).unwrap();
            let e = prior.predict(&x, &cond, t, &s).unwrap();
            for &g in e.values() {
                assert!(g.abs() < 1e-12, "t={t}: {g}");
            }
        }
    }

    #[test]
    fn oracle_epsilon_is_affine_in_x_t() {
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let model = DenoiserModel::oracle_gaussian(0.3, 0.04).unwrap();
        let cond = ImageGrid::zeros(3, 3, 1, ValueDomain::Normalized).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = ImageGrid::standard_normal(3, 3, 1, &mut rng).unwrap();
        let b = ImageGrid::standard_normal(3, 3, 1, &mut rng).unwrap();
        for t in [1usize, 123, 1000] {
            for lambda in [0.25, 0.5, 0.9] {
                let mid = a
                    .zip_map(&b, ValueDomain::Unconstrained, |x, y| {
                        lambda * x + (1.0 - lambda) * y
                    })
                    .unwrap();
                let ea = model.predict(&a, &cond, t, &s).unwrap();
                let eb = model.predict(&b, &cond, t, &s).unwrap();
                let em = model.predict(&mid, &cond, t, &s).unwrap();
                for ((va, vb), vm) in ea.values().iter().zip(eb.values()).zip(em.values()) {
                    let blend = lambda * va + (1.0 - lambda) * vb;
                    assert!((vm - blend).abs() < 1e-12, "t={t} lambda={lambda}");
                }
            }
        }
    }

    #[test]
    fn oracle_reverse_mean_matches_exact_bayesian_blend() {
        // The one-step reverse mean driven by the oracle's noise estimate must
        // coincide with the closed-form conditional mean E[x_{t-1} | x_t] of
        // the linear-Gaussian chain.
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let (mu0, s0_sq) = (0.3, 0.04);
        let prior = OracleGaussianPrior::new(mu0, s0_sq).unwrap();
        let model = DenoiserModel::OracleGaussian(prior);
        let cond = ImageGrid::zeros(3, 3, 1, ValueDomain::Normalized).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x_t = ImageGrid::standard_normal(3, 3, 1, &mut rng).unwrap();
        for t in [1usize, 2, 50, 500, 1000] {
            let abar_t = s.alpha_bar(t);
            let abar_prev = s.alpha_bar_prev(t);
            let alpha_t = s.alpha(t);
            let var_prev = abar_prev * s0_sq + (1.0 - abar_prev);
            let var_t = abar_t * s0_sq + (1.0 - abar_t);
            let slope = alpha_t.sqrt() * var_prev / var_t;
            let eps_hat = model.predict(&x_t, &cond, t, &s).unwrap();
            let mean = crate::diffusion::posterior_mean(&x_t, &eps_hat, t, &s).unwrap();
            for (i, &m) in mean.values().iter().enumerate() {
                let x = x_t.values()[i];
                let exact = abar_prev.sqrt() * mu0 + slope * (x - abar_t.sqrt() * mu0);
                assert!((m - exact).abs() < 1e-10, "t={t}: {m} vs {exact}");
            }
        }
    }

    #[test]
    fn oracle_coefficients_match_monte_carlo_regression() {
        // Simulate 1e5 (x0, x_t) pairs from the prior and the forward
        // marginal; the least-squares line of x0 on x_t must land on the
        // oracle's affine coefficients within 1%.
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let (mu0, s0) = (0.3, 0.2);
        let prior = OracleGaussianPrior::new(mu0, s0 * s0).unwrap();
        let t = 400usize;
        let abar = s.alpha_bar(t);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 100_000usize;
        let normal = rand_distr::StandardNormal;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0f64, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let z0: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
            let ze: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
            let x0 = mu0 + s0 * z0;
            let xt = abar.sqrt() * x0 + (1.0 - abar).sqrt() * ze;
            sx += xt;
            sy += x0;
            sxx += xt * xt;
            sxy += xt * x0;
        }
        let nf = n as f64;
        let slope = (sxy - sx * sy / nf) / (sxx - sx * sx / nf);
        let intercept = sy / nf - slope * sx / nf;

        // Read the oracle's affine map off two probe inputs.
        let zero = ImageGrid::zeros(1, 1, 1, ValueDomain::Unconstrained).unwrap();
        let one = ImageGrid::constant(1, 1, 1, ValueDomain::Unconstrained, 1.0).unwrap();
        let bias = prior.posterior_x0_mean(&zero, t, &s).unwrap().values()[0];
        let gain = prior.posterior_x0_mean(&one, t, &s).unwrap().values()[0] - bias;

        assert!(
            (slope - gain).abs() / gain.abs() < 0.01,
            "slope {slope} vs gain {gain}"
        );
        assert!(
            (intercept - bias).abs() / bias.abs() < 0.01,
            "intercept {intercept} vs bias {bias}"
        );
    }

    #[test]
    fn predict_checks_shapes_and_timestep() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.02).unwrap();
        let x = ImageGrid::zeros(2, 2, 1, ValueDomain::Unconstrained).unwrap();
        let c = ImageGrid::zeros(2, 3, 1, ValueDomain::Normalized).unwrap();
        let model = DenoiserModel::ConstantZero;
        assert!(model.predict(&x, &c, 5, &s).is_err());
        let c2 = ImageGrid::zeros(2, 2, 1, ValueDomain::Normalized).unwrap();
        assert!(model.predict(&x, &c2, 0, &s).is_err());
        assert!(model.predict(&x, &c2, 11, &s).is_err());
    }
}
