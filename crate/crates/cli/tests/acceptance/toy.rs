//! Adversarial training on the 1-D sinusoid set at the standard
//! optimizer settings.

use gasp_core::data::grid_coordinates;
use gasp_core::function_rep::MlpArchitecture;
use gasp_core::hypernet::{sample_latent, Hypernetwork};
use gasp_core::pointconv::{DiscriminatorConfig, DiscriminatorStack};
use gasp_core::rff::FourierEncoding;
use gasp_core::toy::{mean_features, sinusoid_dataset};
use gasp_core::training::{Trainer, TrainingConfig};

use crate::common::Outcome;

const EXAMPLES: usize = 512;
const POINTS: usize = 64;
const STEPS: u64 = 2000;
const WINDOW: usize = 100;
const SAMPLES: u64 = 64;
const LATENT_SEED: u64 = 1000;
const D_RANGE: (f64, f64) = (0.3, 0.7);
const MEAN_TOL: f64 = 0.15;

fn train() -> Result<Outcome, gasp_core::Error> {
    let data = sinusoid_dataset(EXAMPLES, POINTS, 7)?;
    let enc = FourierEncoding::sample(16, 1, 1.0, 11)?;
    let target = MlpArchitecture::new(enc.output_dim(), vec![32, 32], 1)?;
    let generator = Hypernetwork::new(64, &[256, 512], target, Some(enc), 1)?;
    let disc = DiscriminatorStack::new(DiscriminatorConfig::new(1, 1, vec![8, 16, 32]), 2)?;
    let config = TrainingConfig {
        batch_size: 16,
        epochs: 1000,
        max_steps: Some(STEPS),
        seed: 3,
        ..Default::default()
    };
    let mut trainer = Trainer::new(generator, disc, config)?;
    trainer.run(&data, |_| Ok(()))?;

    let tail = &trainer.history[trainer.history.len().saturating_sub(WINDOW)..];
    let n = tail.len() as f64;
    let d_real = tail.iter().map(|r| r.d_real).sum::<f64>() / n;
    let d_fake = tail.iter().map(|r| r.d_fake).sum::<f64>() / n;

    let coords = grid_coordinates(&[POINTS])?;
    let data_mean = mean_features(&data)?;
    let mut sample_mean = vec![0.0; POINTS];
    for s in 0..SAMPLES {
        let z = sample_latent(64, LATENT_SEED + s)?;
        let y = trainer.generator.generate_features(&z, &coords)?;
        for (m, v) in sample_mean.iter_mut().zip(y.data()) {
            *m += v / SAMPLES as f64;
        }
    }
    let deviation = sample_mean.iter().zip(&data_mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let in_range = |v: f64| (D_RANGE.0..=D_RANGE.1).contains(&v);
    Ok(Outcome::new(
        in_range(d_real) && in_range(d_fake) && deviation <= MEAN_TOL,
        format!(
            "{STEPS} steps, mean D(real) {d_real:.3} and D(fake) {d_fake:.3} over the last {WINDOW} steps (in [{}, {}]), \
             max per-coordinate mean deviation of {SAMPLES} samples {deviation:.3} (<= {MEAN_TOL})",
            D_RANGE.0, D_RANGE.1
        ),
    ))
}

pub fn run() -> Outcome {
    train().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")))
}
