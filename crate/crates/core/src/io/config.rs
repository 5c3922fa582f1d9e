//! Run configuration: a TOML file with nested sections for the schedule,
//! sampler, regional engine, and trainer, plus dataset and output locations.
//!
//! Precedence, highest first: CLI flag, the `RDDPM_OUT_DIR` environment
//! variable (output directory only), the config file, built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use crate::sampler::SamplerConfig;
use crate::train::TrainConfig;
use crate::{Error, NoiseSchedule, Result};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "RDDPM_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            t_steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.t_steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RegionalConfig {
    /// Window side `m`.
    pub window: usize,
    /// Stride `n`; must divide `window`.
    pub stride: usize,
    /// Worker threads for window evaluation; `0` means one per core.
    pub workers: usize,
}

impl Default for RegionalConfig {
    fn default() -> Self {
        RegionalConfig {
            window: 64,
            stride: 16,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Dataset manifest consumed by training and evaluation runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    pub schedule: ScheduleConfig,
    pub sampler: SamplerConfig,
    pub regional: RegionalConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            manifest: None,
            schedule: ScheduleConfig::default(),
            sampler: SamplerConfig::default(),
            regional: RegionalConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads and validates a config file. Relative `manifest` paths are
    /// resolved against the file's directory so the config can be invoked
    /// from anywhere.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::TomlParse {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(m) = cfg.manifest.take() {
            cfg.manifest = Some(if m.is_absolute() { m } else { base.join(m) });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.build()?;
        self.sampler.validate(self.schedule.t_steps)?;
        self.train.validate()?;
        let r = &self.regional;
        if r.stride == 0 || r.window == 0 || r.window % r.stride != 0 {
            return Err(Error::InvalidConfig(format!(
                "regional window must be a positive multiple of stride, got window {}, stride {}",
                r.window, r.stride
            )));
        }
        if let Some(m) = &self.manifest {
            if !m.exists() {
                return Err(Error::InvalidConfig(format!(
                    "manifest path {} does not exist",
                    m.display()
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, overwrite: bool) -> Result<()> {
        if !overwrite && path.exists() {
            return Err(Error::WouldOverwrite(path.to_path_buf()));
        }
        let text = toml::to_string_pretty(self).map_err(|e| Error::TomlWrite {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Applies the output-directory precedence chain: an explicit CLI value wins,
/// then [`OUTPUT_DIR_ENV`], then the configured directory.
pub fn effective_output_dir(cfg: &RunConfig, cli_override: Option<&Path>) -> PathBuf {
    if let Some(p) = cli_override {
        return p.to_path_buf();
    }
    if let Ok(env_dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !env_dir.is_empty() {
            return PathBuf::from(env_dir);
        }
    }
    cfg.output_dir.clone()
}
