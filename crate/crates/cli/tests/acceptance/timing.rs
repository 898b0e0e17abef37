//! Training-step wall time with a fixed point budget on low- and
//! high-resolution image sources.

use std::time::Instant;

use gasp_autodiff::Tensor;
use gasp_core::data::{grid_coordinates, PointCloud};
use gasp_core::function_rep::MlpArchitecture;
use gasp_core::hypernet::Hypernetwork;
use gasp_core::pointconv::{DiscriminatorConfig, DiscriminatorStack};
use gasp_core::rff::FourierEncoding;
use gasp_core::rng;
use gasp_core::training::{Trainer, TrainingConfig};

use crate::common::Outcome;

const K: usize = 256;
const IMAGES: usize = 8;
const WARMUP: usize = 2;
const BLOCKS: usize = 4;
const STEPS_PER_BLOCK: usize = 3;
const MAX_DIFFERENCE: f64 = 0.25;

fn dataset(side: usize, seed: u64) -> Result<Vec<PointCloud>, gasp_core::Error> {
    let coords = grid_coordinates(&[side, side])?;
    let mut rng = rng::seeded(seed);
    (0..IMAGES)
        .map(|_| {
            let features = Tensor::matrix(side * side, 3, rng::uniform_vec(&mut rng, side * side * 3, 1.0))?;
            PointCloud::new(coords.clone(), features)
        })
        .collect()
}

fn trainer() -> Result<Trainer<DiscriminatorStack>, gasp_core::Error> {
    let enc = FourierEncoding::sample(32, 2, 1.0, 0)?;
    let target = MlpArchitecture::new(enc.output_dim(), vec![64, 64, 64], 3)?;
    let generator = Hypernetwork::new(32, &[64, 128], target, Some(enc), 1)?;
    let disc = DiscriminatorStack::new(DiscriminatorConfig::new(2, 3, vec![16, 32, 64]), 2)?;
    let config = TrainingConfig {
        batch_size: 8,
        epochs: 1000,
        k_subsample: Some(K),
        seed: 3,
        ..Default::default()
    };
    Trainer::new(generator, disc, config)
}

fn measure() -> Result<(f64, f64), gasp_core::Error> {
    let small = dataset(32, 1)?;
    let large = dataset(128, 2)?;
    let mut a = trainer()?;
    let mut b = trainer()?;
    for _ in 0..WARMUP {
        a.step(&small)?;
        b.step(&large)?;
    }
    let (mut ta, mut tb) = (0.0, 0.0);
    for _ in 0..BLOCKS {
        let start = Instant::now();
        for _ in 0..STEPS_PER_BLOCK {
            a.step(&small)?;
        }
        ta += start.elapsed().as_secs_f64();
        let start = Instant::now();
        for _ in 0..STEPS_PER_BLOCK {
            b.step(&large)?;
        }
        tb += start.elapsed().as_secs_f64();
    }
    let n = (BLOCKS * STEPS_PER_BLOCK) as f64;
    Ok((ta / n, tb / n))
}

pub fn run() -> Outcome {
    match measure() {
        Ok((small, large)) => {
            let difference = (large - small).abs() / small.min(large);
            Outcome::new(
                difference < MAX_DIFFERENCE,
                format!(
                    "K={K}, mean step {:.1} ms on 32x32 vs {:.1} ms on 128x128, difference {:.1}% (< {:.0}%)",
                    small * 1e3,
                    large * 1e3,
                    difference * 100.0,
                    MAX_DIFFERENCE * 100.0
                ),
            )
        }
        Err(e) => Outcome::new(false, format!("error: {e}")),
    }
}
