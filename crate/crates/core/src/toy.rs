//! Small synthetic datasets for smoke runs and tests.

use std::f64::consts::TAU;

use gasp_autodiff::Tensor;
use rand::Rng as _;

use crate::data::{grid_coordinates, PointCloud};
use crate::error::{Error, Result};
use crate::rng;

/// `count` curves `y = sin(2πx + φ)` with `φ ~ U[0, 2π)`, each sampled at
/// `points` evenly spaced `x ∈ [−1, 1]`.
pub fn sinusoid_dataset(count: usize, points: usize, seed: u64) -> Result<Vec<PointCloud>> {
    if count == 0 || points == 0 {
        return Err(Error::invalid("sinusoid dataset needs at least one curve and one point"));
    }
    let coords = grid_coordinates(&[points])?;
    let mut rng = rng::seeded(seed);
    (0..count)
        .map(|_| {
            let phase = rng.gen_range(0.0..TAU);
            let y: Vec<f64> = coords.data().iter().map(|x| (TAU * x + phase).sin()).collect();
            PointCloud::new(coords.clone(), Tensor::matrix(points, 1, y)?)
        })
        .collect()
}

/// Per-row mean of the features of equally sized clouds.
pub fn mean_features(clouds: &[PointCloud]) -> Result<Vec<f64>> {
    let first = clouds.first().ok_or_else(|| Error::invalid("no clouds to average"))?;
    let len = first.features().len();
    let mut sum = vec![0.0; len];
    for pc in clouds {
        if pc.features().len() != len {
            return Err(Error::dim("clouds have different sizes"));
        }
        for (s, v) in sum.iter_mut().zip(pc.features().data()) {
            *s += v;
        }
    }
    Ok(sum.into_iter().map(|s| s / clouds.len() as f64).collect())
}
