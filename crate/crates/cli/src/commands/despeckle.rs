use std::io::Write as _;

use rddpm_core::denoiser::DenoiserModel;
use rddpm_core::io::{load_image, load_weights, save_image, ImageFormat};
use rddpm_core::metrics;
use rddpm_core::regional::{plan_windows, regional_despeckle_averaged};
use rddpm_core::sampler::{SamplerConfig, SamplerKind};
use rddpm_core::Result;

use crate::args::{DespeckleArgs, SamplerArg};

pub fn run(args: &DespeckleArgs) -> Result<()> {
    let cfg = super::load_config(args.config.as_deref())?;
    let schedule = super::build_schedule(&cfg, &args.schedule)?;
    let seed = args.seed.unwrap_or(cfg.seed);

    let window = args.window.unwrap_or(cfg.regional.window);
    let stride = args.stride.unwrap_or(cfg.regional.stride);
    let workers = args.workers.unwrap_or(cfg.regional.workers);

    let steps = args.steps.or(cfg.sampler.num_inference_steps);
    let kind = match args.sampler {
        Some(SamplerArg::Ddpm) => SamplerKind::Ddpm,
        Some(SamplerArg::Ddim) => SamplerKind::Ddim,
        None => match steps {
            Some(k) if k < schedule.len() => SamplerKind::Ddim,
            Some(_) => SamplerKind::Ddpm,
            None => cfg.sampler.kind,
        },
    };
    let sampler = SamplerConfig {
        kind,
        num_inference_steps: steps,
        eta: args.eta.unwrap_or(cfg.sampler.eta),
        variance: cfg.sampler.variance,
        seed,
    };
    sampler.validate(schedule.len())?;
    super::refuse_overwrite(&args.out, args.overwrite)?;

    let condition = load_image(&args.input)?;
    let model = match &args.weights {
        Some(path) => load_weights(path)?,
        None => DenoiserModel::oracle_gaussian(args.prior_mean, args.prior_var)?,
    };

    let restored = regional_despeckle_averaged(
        &condition,
        &model,
        &schedule,
        &sampler,
        window,
        stride,
        args.chains,
        workers,
        &mut |i, total, t| {
            eprint!("\rstep {}/{total} (t={t})", i + 1);
            std::io::stderr().flush().ok();
        },
    )?;
    eprintln!();

    save_image(
        &restored,
        &args.out,
        ImageFormat::from_path(&args.out)?,
        args.overwrite,
    )?;
    println!("wrote {}", args.out.display());

    if let Some(reference) = &args.reference {
        let reference = load_image(reference)?;
        let roi = args.roi.as_deref().map(super::parse_roi).transpose()?;
        let seam_plan = if condition.height() > window || condition.width() > window {
            Some(plan_windows(
                condition.height(),
                condition.width(),
                window,
                stride,
            )?)
        } else {
            None
        };
        let report = metrics::evaluate(&restored, Some(&reference), roi, seam_plan.as_ref())?;
        print!("{}", report.render_text());
    }
    Ok(())
}
