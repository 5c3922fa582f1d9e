use rddpm_core::denoiser::DenoiserModel;
use rddpm_core::sampler::{sample, SamplerConfig};
use rddpm_core::{ImageGrid, NoiseSchedule, Result, ValueDomain};

use crate::args::OracleCheckArgs;

pub fn run(args: &OracleCheckArgs) -> Result<i32> {
    let schedule = NoiseSchedule::linear(args.t, args.beta_start, args.beta_end)?;
    let model = DenoiserModel::oracle_gaussian(args.prior_mean, args.prior_var)?;
    let condition = ImageGrid::zeros(1, args.chains, 1, ValueDomain::Normalized)?;
    let sampler = SamplerConfig {
        seed: args.seed,
        ..SamplerConfig::default()
    };
    let restored = sample(&condition, &model, &schedule, &sampler)?;

    let n = restored.values().len() as f64;
    let mean = restored.values().iter().sum::<f64>() / n;
    let var = restored
        .values()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n - 1.0);

    let se_mean = (args.prior_var / n).sqrt();
    let se_var = args.prior_var * (2.0 / (n - 1.0)).sqrt();
    let mean_ok = (mean - args.prior_mean).abs() <= 3.0 * se_mean;
    let var_ok = (var - args.prior_var).abs() <= 3.0 * se_var;

    println!("chains:   {}", args.chains);
    println!(
        "mean:     {mean:.6}  (expected {:.6} +/- {:.6})",
        args.prior_mean,
        3.0 * se_mean
    );
    println!(
        "variance: {var:.6}  (expected {:.6} +/- {:.6})",
        args.prior_var,
        3.0 * se_var
    );
    if mean_ok && var_ok {
        println!("PASS");
        Ok(0)
    } else {
        println!("FAIL");
        Ok(1)
    }
}
