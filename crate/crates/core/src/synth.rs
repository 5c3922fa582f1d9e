//! Synthetic data: controlled degradations for building training pairs, and
//! a deterministic texture generator so experiments need no external images.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::{Error, ImageGrid, Result, ValueDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    /// Additive Gaussian noise in the signal domain.
    GaussianAdditive,
    /// Multiplicative gamma speckle applied in the intensity domain, the
    /// standard multi-look amplitude model: unit mean, variance `1 / looks`.
    GammaSpeckle,
}

/// Full description of how a clean image was degraded; stored alongside
/// dataset entries so every pair is reproducible.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    /// Noise standard deviation, used by `gaussian_additive`.
    pub sigma: f64,
    /// Number of looks, used by `gamma_speckle`.
    pub looks: u32,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        DegradationSpec {
            kind: DegradationKind::GaussianAdditive,
            sigma,
            looks: 1,
            seed,
        }
    }

    pub fn speckle(looks: u32, seed: u64) -> Self {
        DegradationSpec {
            kind: DegradationKind::GammaSpeckle,
            sigma: 0.0,
            looks,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DegradationKind::GaussianAdditive => {
                if !(self.sigma.is_finite() && self.sigma >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "gaussian degradation needs sigma >= 0, got {}",
                        self.sigma
                    )));
                }
            }
            DegradationKind::GammaSpeckle => {
                if self.looks == 0 {
                    return Err(Error::InvalidConfig(
                        "gamma speckle needs looks >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Applies the degradation to a clean signal-domain image using the caller's
/// rng (draws in row-major order). The result is clamped back into `[-1, 1]`.
pub fn degrade<R: Rng + ?Sized>(
    clean: &ImageGrid,
    spec: &DegradationSpec,
    rng: &mut R,
) -> Result<ImageGrid> {
    spec.validate()?;
    let mut out = match spec.kind {
        DegradationKind::GaussianAdditive => clean.map(ValueDomain::Unconstrained, |v| v),
        DegradationKind::GammaSpeckle => clean.to_intensity(),
    };
    match spec.kind {
        DegradationKind::GaussianAdditive => {
            for v in out.values_mut() {
                let n: f64 = StandardNormal.sample(rng);
                *v += spec.sigma * n;
            }
        }
        DegradationKind::GammaSpeckle => {
            let gamma = Gamma::new(spec.looks as f64, 1.0 / spec.looks as f64)
                .map_err(|e| Error::InvalidConfig(format!("gamma speckle: {e}")))?;
            for v in out.values_mut() {
                // Multiply intensity by a unit-mean speckle draw, then map
                // back to the signal domain.
                let g: f64 = gamma.sample(rng);
                *v = 2.0 * (*v * g) - 1.0;
            }
        }
    }
    out.clamp_normalized();
    Ok(out)
}

/// Convenience wrapper that seeds the rng from the spec itself.
pub fn degrade_seeded(clean: &ImageGrid, spec: &DegradationSpec) -> Result<ImageGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    degrade(clean, spec, &mut rng)
}

/// Raw unit-mean gamma speckle field (no image involved), useful for
/// checking that ENL recovers the look count.
pub fn gamma_speckle_field<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    channels: usize,
    looks: u32,
    rng: &mut R,
) -> Result<ImageGrid> {
    if looks == 0 {
        return Err(Error::InvalidConfig("gamma speckle needs looks >= 1".into()));
    }
    let gamma = Gamma::new(looks as f64, 1.0 / looks as f64)
        .map_err(|e| Error::InvalidConfig(format!("gamma speckle: {e}")))?;
    let mut out = ImageGrid::zeros(height, width, channels, ValueDomain::Unconstrained)?;
    for v in out.values_mut() {
        *v = gamma.sample(rng);
    }
    Ok(out)
}

/// Deterministic smooth test texture in `[-0.88, 0.88]`: a few plane waves,
/// soft blobs, and one soft-edged rectangle, so restorations have both
/// gentle gradients and edges to preserve. Same `(height, width, seed)`
/// always produces the same image.
pub fn toy_texture(height: usize, width: usize, seed: u64) -> Result<ImageGrid> {
    if height == 0 || width == 0 {
        return Err(Error::EmptyGrid(height, width, 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0f64; height * width];
    let diag = ((height * height + width * width) as f64).sqrt();

    for _ in 0..4 {
        let theta = rng.random::<f64>() * PI;
        let wavelength = 14.0 + rng.random::<f64>() * 0.35 * diag;
        let phase = rng.random::<f64>() * TAU;
        let amp = 0.3 + rng.random::<f64>() * 0.7;
        let ky = theta.sin() * TAU / wavelength;
        let kx = theta.cos() * TAU / wavelength;
        for r in 0..height {
            for c in 0..width {
                values[r * width + c] += amp * (ky * r as f64 + kx * c as f64 + phase).sin();
            }
        }
    }

    for _ in 0..3 {
        let cr = rng.random::<f64>() * height as f64;
        let cc = rng.random::<f64>() * width as f64;
        let radius = (0.10 + rng.random::<f64>() * 0.18) * diag;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let amp = sign * (0.4 + rng.random::<f64>() * 0.6);
        let inv_r2 = 1.0 / (radius * radius);
        for r in 0..height {
            for c in 0..width {
                let d2 = ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)) * inv_r2;
                values[r * width + c] += amp * (-d2).exp();
            }
        }
    }

    // One rectangle with ~1.5 px soft edges gives the texture clean step
    // edges for edge-preservation measurements.
    let r0 = rng.random::<f64>() * 0.5 * height as f64;
    let r1 = r0 + (0.2 + rng.random::<f64>() * 0.3) * height as f64;
    let c0 = rng.random::<f64>() * 0.5 * width as f64;
    let c1 = c0 + (0.2 + rng.random::<f64>() * 0.3) * width as f64;
    let amp = if rng.random::<bool>() { 0.8 } else { -0.8 };
    let softness = 1.5;
    for r in 0..height {
        let fr = 0.25
            * (1.0 + ((r as f64 - r0) / softness).tanh())
            * (1.0 + ((r1 - r as f64) / softness).tanh());
        for c in 0..width {
            let fc = 0.25
                * (1.0 + ((c as f64 - c0) / softness).tanh())
                * (1.0 + ((c1 - c as f64) / softness).tanh());
            values[r * width + c] += amp * fr * fc;
        }
    }

    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max_abs = values
        .iter()
        .map(|v| (v - mean).abs())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let scale = 0.88 / max_abs;
    let mut g = ImageGrid::zeros(height, width, 1, ValueDomain::Normalized)?;
    for (slot, v) in g.values_mut().iter_mut().zip(&values) {
        *slot = (v - mean) * scale;
    }
    Ok(g)
}
