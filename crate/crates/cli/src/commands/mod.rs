mod despeckle;
mod eval;
mod make_dataset;
mod oracle_check;
mod schedule_dump;
mod train;

use std::path::Path;

use rddpm_core::io::{RunConfig, ScheduleConfig};
use rddpm_core::metrics::Rect;
use rddpm_core::{Error, NoiseSchedule, Result};

use crate::args::{Command, ScheduleOverrides};

/// Executes one subcommand and yields the process exit code for successful
/// runs (a failed oracle check reports FAIL and exits 1 without an error).
pub fn run(command: Command) -> Result<i32> {
    match command {
        Command::MakeDataset(args) => make_dataset::run(&args).map(|()| 0),
        Command::Train(args) => train::run(&args).map(|()| 0),
        Command::Despeckle(args) => despeckle::run(&args).map(|()| 0),
        Command::Eval(args) => eval::run(&args).map(|()| 0),
        Command::ScheduleDump(args) => schedule_dump::run(&args).map(|()| 0),
        Command::OracleCheck(args) => oracle_check::run(&args),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn build_schedule(cfg: &RunConfig, overrides: &ScheduleOverrides) -> Result<NoiseSchedule> {
    ScheduleConfig {
        t_steps: overrides.t_steps.unwrap_or(cfg.schedule.t_steps),
        beta_start: overrides.beta_start.unwrap_or(cfg.schedule.beta_start),
        beta_end: overrides.beta_end.unwrap_or(cfg.schedule.beta_end),
    }
    .build()
}

fn parse_roi(text: &str) -> Result<Rect> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let invalid = || {
        Error::InvalidConfig(format!(
            "roi must be row,col,height,width of non-negative integers, got {text:?}"
        ))
    };
    if parts.len() != 4 {
        return Err(invalid());
    }
    let mut nums = [0usize; 4];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part.parse().map_err(|_| invalid())?;
    }
    Ok(Rect {
        row: nums[0],
        col: nums[1],
        height: nums[2],
        width: nums[3],
    })
}

fn refuse_overwrite(path: &Path, overwrite: bool) -> Result<()> {
    if path.exists() && !overwrite {
        return Err(Error::WouldOverwrite(path.to_path_buf()));
    }
    Ok(())
}
