//! Speckle removal for single-look and multi-look imagery via conditional
//! denoising diffusion, with a regional sampler that restores arbitrarily
//! large images through overlapping fixed-size windows.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: the [`ImageGrid`] container every stage operates on
//! - [`schedule`]: the variance schedule and quantities derived from it
//! - [`diffusion`]: forward corruption and the exact posterior algebra
//! - [`denoiser`]: noise predictors (analytic Gaussian prior, trainable CNN)
//! - [`train`]: Adam training loop for the CNN predictor
//! - [`sampler`]: DDPM and DDIM reverse chains
//! - [`regional`]: overlapping-window noise fusion and full-image restoration
//! - [`synth`]: degradation models and texture generation for experiments
//! - [`metrics`]: PSNR / SSIM / ENL / EPI / seam diagnostics
//! - [`io`]: images, weight files, dataset manifests, run configuration

pub mod denoiser;
pub mod diffusion;
mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod regional;
pub mod sampler;
pub mod schedule;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use grid::{ImageGrid, ValueDomain};
pub use schedule::NoiseSchedule;
