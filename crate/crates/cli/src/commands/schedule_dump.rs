use std::path::Path;

use rddpm_core::{Error, NoiseSchedule, Result};

use crate::args::ScheduleDumpArgs;

pub fn run(args: &ScheduleDumpArgs) -> Result<()> {
    let schedule = NoiseSchedule::linear(args.t_steps, args.beta_start, args.beta_end)?;
    match &args.out {
        Some(path) => {
            super::refuse_overwrite(path, args.overwrite)?;
            let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            schedule.write_csv(file).map_err(|e| Error::io(path, e))?;
            println!("wrote {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            schedule
                .write_csv(stdout.lock())
                .map_err(|e| Error::io(Path::new("-"), e))?;
        }
    }
    Ok(())
}
