//! The set discriminator and auto-decoder baselines.

use gasp_autodiff::Tensor;
use gasp_core::baselines::{autodecoder_train, latent_prior_check, AutoDecoderConfig, SetDiscriminator};
use gasp_core::data::PointCloud;
use gasp_core::rff::FourierEncoding;
use gasp_core::rng;
use gasp_core::toy::sinusoid_dataset;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::common::Outcome;

const CLOUDS: u64 = 50;
const EXAMPLES: usize = 16;
const TARGET_MSE: f64 = 1e-3;
const PRIOR_DRAWS: usize = 1000;

fn permutation_failures() -> Result<u64, gasp_core::Error> {
    let sd = SetDiscriminator::with_defaults(
        FourierEncoding::sample(8, 2, 1.0, 1)?,
        FourierEncoding::sample(4, 1, 1.0, 2)?,
        3,
    )?;
    let mut failures = 0;
    for seed in 0..CLOUDS {
        let mut rng = rng::seeded(300 + seed);
        let n = rng.gen_range(2..64);
        let pc = PointCloud::new(
            Tensor::matrix(n, 2, rng::uniform_vec(&mut rng, 2 * n, 1.0))?,
            Tensor::matrix(n, 1, rng::uniform_vec(&mut rng, n, 1.0))?,
        )?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        if sd.discriminate(&pc)?.to_bits() != sd.discriminate(&pc.select(&order)?)?.to_bits() {
            failures += 1;
        }
    }
    Ok(failures)
}

fn check() -> Result<Outcome, gasp_core::Error> {
    let failures = permutation_failures()?;
    let data = sinusoid_dataset(EXAMPLES, 64, 5)?;
    let config = AutoDecoderConfig {
        steps: 2000,
        ..Default::default()
    };
    let fit = autodecoder_train(&data, Some(FourierEncoding::sample(16, 1, 1.0, 6)?), &config)?;
    let prior = latent_prior_check(fit.model.latents(), PRIOR_DRAWS, 17)?;
    let fresh = Tensor::matrix(EXAMPLES, config.latent_dim, rng::normal_vec(&mut rng::seeded(99), EXAMPLES * config.latent_dim, 1.0))?;
    let fresh = latent_prior_check(&fresh, PRIOR_DRAWS, 17)?;
    println!("    trained latents: {prior}");
    println!("    fresh N(0,I) table: {fresh}");
    Ok(Outcome::new(
        failures == 0 && fit.final_mse < TARGET_MSE,
        format!(
            "{failures} of {CLOUDS} set-discriminator permutations differ bitwise; auto-decoder MSE {:.2e} on {EXAMPLES} examples (< {TARGET_MSE:e}); \
             trained latents {} the N(0,I) band, fresh draws {} (reported only)",
            fit.final_mse,
            if prior.consistent { "inside" } else { "outside" },
            if fresh.consistent { "inside" } else { "outside" }
        ),
    ))
}

pub fn run() -> Outcome {
    check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")))
}
