use rddpm_core::io::load_image;
use rddpm_core::metrics::{self, MetricsReport};
use rddpm_core::regional::plan_windows;
use rddpm_core::Result;

use crate::args::EvalArgs;

pub fn run(args: &EvalArgs) -> Result<()> {
    let restored = load_image(&args.restored)?;
    let reference = args.reference.as_deref().map(load_image).transpose()?;
    let roi = args.roi.as_deref().map(super::parse_roi).transpose()?;

    let seam_plan = match args.window {
        Some(window) => {
            let stride = args.stride.unwrap_or(window);
            Some(plan_windows(
                restored.height(),
                restored.width(),
                window,
                stride,
            )?)
        }
        None => None,
    };

    let report = metrics::evaluate(&restored, reference.as_ref(), roi, seam_plan.as_ref())?;
    if args.csv {
        println!("{}", MetricsReport::csv_header());
        println!("{}", report.csv_row());
    } else {
        print!("{}", report.render_text());
    }
    Ok(())
}
