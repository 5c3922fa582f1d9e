//! Forward corruption process and the closed-form pieces of its reversal.
//!
//! With `abar_t` from the schedule, the forward marginal is
//! `x_t = sqrt(abar_t) * x_0 + sqrt(1 - abar_t) * eps` for standard normal
//! `eps`, so a training pair at any `t` costs one noise draw. The reverse
//! direction uses the posterior mean of `x_{t-1}` given `(x_t, x_0)`
//! re-expressed in terms of a noise estimate.

use crate::{ImageGrid, NoiseSchedule, Result, ValueDomain};

/// Diffuses `x0` straight to timestep `t` using the provided noise grid:
/// `sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps`.
pub fn q_sample(
    x0: &ImageGrid,
    t: usize,
    eps: &ImageGrid,
    schedule: &NoiseSchedule,
) -> Result<ImageGrid> {
    schedule.check_timestep(t)?;
    x0.expect_same_shape(eps, "q_sample")?;
    let abar = schedule.alpha_bar(t);
    let signal = abar.sqrt();
    let noise = (1.0 - abar).sqrt();
    x0.zip_map(eps, ValueDomain::Unconstrained, |x, e| {
        signal * x + noise * e
    })
}

/// Mean of the reverse transition at step `t` given a noise estimate:
/// `(x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)`.
pub fn posterior_mean(
    x_t: &ImageGrid,
    eps_hat: &ImageGrid,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<ImageGrid> {
    schedule.check_timestep(t)?;
    x_t.expect_same_shape(eps_hat, "posterior_mean")?;
    let coeff = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    x_t.zip_map(eps_hat, ValueDomain::Unconstrained, |x, e| {
        inv_sqrt_alpha * (x - coeff * e)
    })
}

/// Inverts the forward marginal for a given noise estimate:
/// `(x_t - sqrt(1 - abar_t) * eps_hat) / sqrt(abar_t)`.
pub fn predict_x0_from_eps(
    x_t: &ImageGrid,
    eps_hat: &ImageGrid,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<ImageGrid> {
    schedule.check_timestep(t)?;
    x_t.expect_same_shape(eps_hat, "predict_x0_from_eps")?;
    let abar = schedule.alpha_bar(t);
    let noise = (1.0 - abar).sqrt();
    let inv_signal = 1.0 / abar.sqrt();
    x_t.zip_map(eps_hat, ValueDomain::Unconstrained, |x, e| {
        inv_signal * (x - noise * e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap()
    }

    fn grid(values: Vec<f64>) -> ImageGrid {
        let n = values.len();
        ImageGrid::from_values(1, n, 1, ValueDomain::Unconstrained, values).unwrap()
    }

    #[test]
    fn q_sample_on_constant_inputs() {
        let s = NoiseSchedule::from_betas(vec![0.1, 0.2, 0.3]).unwrap();
        // abar_2 = 0.72, so 1*sqrt(0.72) + 1*sqrt(0.28).
        let x0 = grid(vec![1.0, 1.0]);
        let eps = grid(vec![1.0, 1.0]);
        let xt = q_sample(&x0, 2, &eps, &s).unwrap();
        let expect = 0.72f64.sqrt() + 0.28f64.sqrt();
        for &v in xt.values() {
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn q_sample_with_zero_noise_scales_signal() {
        let s = schedule();
        let x0 = grid(vec![0.25, -0.5, 1.0]);
        let eps = grid(vec![0.0, 0.0, 0.0]);
        let xt = q_sample(&x0, 700, &eps, &s).unwrap();
        let scale = s.alpha_bar(700).sqrt();
        for (a, b) in xt.values().iter().zip(x0.values()) {
            assert_eq!(*a, scale * b);
        }
    }

    #[test]
    fn predict_x0_inverts_q_sample() {
        let s = schedule();
        let x0 = grid(vec![0.3, -0.7, 0.1, 0.9]);
        let eps = grid(vec![1.5, -0.2, 0.0, -2.0]);
        for t in [1usize, 250, 500, 1000] {
            let xt = q_sample(&x0, t, &eps, &s).unwrap();
            let back = predict_x0_from_eps(&xt, &eps, t, &s).unwrap();
            for (a, b) in back.values().iter().zip(x0.values()) {
                assert!((a - b).abs() < 1e-9, "t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn posterior_mean_with_zero_noise_estimate() {
        let s = schedule();
        let x_t = grid(vec![0.4, -0.4]);
        let zero = grid(vec![0.0, 0.0]);
        let mean = posterior_mean(&x_t, &zero, 10, &s).unwrap();
        let expect = 1.0 / s.alpha(10).sqrt();
        for (m, x) in mean.values().iter().zip(x_t.values()) {
            assert!((m - expect * x).abs() < 1e-15);
        }
    }

    #[test]
    fn timestep_and_shape_validation() {
        let s = schedule();
        let a = grid(vec![0.0; 4]);
        let b = grid(vec![0.0; 3]);
        assert!(matches!(
            q_sample(&a, 0, &a, &s),
            Err(Error::TimestepOutOfRange { t: 0, .. })
        ));
        assert!(matches!(
            q_sample(&a, 1001, &a, &s),
            Err(Error::TimestepOutOfRange { t: 1001, .. })
        ));
        assert!(posterior_mean(&a, &b, 5, &s).is_err());
        assert!(predict_x0_from_eps(&a, &b, 5, &s).is_err());
    }
}
