//! PointConv on integer grids against a brute-force 3×3 convolution, and
//! the symmetries of the full discriminator.

use std::collections::HashMap;

use gasp_autodiff::{Graph, Tensor};
use gasp_core::data::PointCloud;
use gasp_core::pointconv::{pointconv_with, DiscriminatorConfig, DiscriminatorStack};
use gasp_core::rng::{self, Rng};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::common::Outcome;

const KERNELS: u64 = 20;
const GRID_TOL: f64 = 1e-10;
const CLOUDS: u64 = 50;
const TRANSLATION_TOL: f64 = 1e-9;

fn integer_grid(h: usize, w: usize) -> Tensor {
    let data = (0..h).flat_map(|i| (0..w).flat_map(move |j| [i as f64, j as f64])).collect();
    Tensor::matrix(h * w, 2, data).unwrap()
}

/// `out[x][o] = Σ_δ Σ_i K[δ][o][i] · f[x + δ][i]` at interior cells, with
/// offsets `δ` enumerated row-major over `{−1, 0, 1}²`.
fn conv3x3(f: &[f64], h: usize, w: usize, c_in: usize, c_out: usize, kernel: &[f64]) -> Vec<(usize, Vec<f64>)> {
    let mut out = Vec::new();
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let mut acc = vec![0.0; c_out];
            for dr in 0..3 {
                for dc in 0..3 {
                    let t = dr * 3 + dc;
                    let src = (r + dr - 1) * w + (c + dc - 1);
                    for (o, a) in acc.iter_mut().enumerate() {
                        for i in 0..c_in {
                            *a += kernel[(t * c_out + o) * c_in + i] * f[src * c_in + i];
                        }
                    }
                }
            }
            out.push((r * w + c, acc));
        }
    }
    out
}

fn grid_instance(seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let (h, w) = (rng.gen_range(3..9), rng.gen_range(3..9));
    let (c_in, c_out) = (rng.gen_range(1..4), rng.gen_range(1..4));
    let points = integer_grid(h, w);
    let feats = rng::uniform_vec(&mut rng, h * w * c_in, 1.0);
    let kernel = rng::uniform_vec(&mut rng, 9 * c_out * c_in, 1.0);
    let table: HashMap<(i64, i64), &[f64]> = (-1i64..=1)
        .flat_map(|a| (-1i64..=1).map(move |b| (a, b)))
        .zip(kernel.chunks(c_out * c_in))
        .collect();

    let expected = conv3x3(&feats, h, w, c_in, c_out, &kernel);
    let queries: Vec<f64> = expected.iter().flat_map(|(i, _)| points.data()[2 * i..2 * i + 2].to_vec()).collect();
    let queries = Tensor::matrix(expected.len(), 2, queries).unwrap();

    let graph = Graph::new();
    let f = graph.constant(Tensor::matrix(h * w, c_in, feats).unwrap());
    let out = pointconv_with(&points, f, &queries, 9, 2.0, c_out, |offsets| {
        let rows = offsets.shape()[0];
        let values: Vec<f64> = offsets
            .value()
            .data()
            .chunks(2)
            .flat_map(|o| table[&(o[0] as i64, o[1] as i64)].to_vec())
            .collect();
        Ok(graph.constant(Tensor::matrix(rows, c_out * c_in, values).unwrap()))
    })
    .unwrap()
    .value();

    expected
        .iter()
        .enumerate()
        .flat_map(|(q, (_, want))| want.iter().enumerate().map(move |(o, w)| (q * c_out + o, *w)))
        .map(|(i, w)| (out.data()[i] - w).abs())
        .fold(0.0, f64::max)
}

pub fn grid_equivalence() -> Outcome {
    let worst = (0..KERNELS).map(grid_instance).fold(0.0, f64::max);
    Outcome::new(
        worst <= GRID_TOL,
        format!("{KERNELS} random kernels and inputs, max deviation {worst:.1e} (<= {GRID_TOL:e})"),
    )
}

fn random_cloud(rng: &mut Rng, n: usize) -> PointCloud {
    PointCloud::new(
        Tensor::matrix(n, 2, rng::uniform_vec(rng, 2 * n, 1.0)).unwrap(),
        Tensor::matrix(n, 3, rng::uniform_vec(rng, 3 * n, 1.0)).unwrap(),
    )
    .unwrap()
}

pub fn symmetry() -> Outcome {
    let mut disc = DiscriminatorStack::new(DiscriminatorConfig::new(2, 3, vec![4, 8, 16]), 5).unwrap();
    let mut permutation_failures = 0;
    let mut worst_shift = 0.0f64;
    for seed in 0..CLOUDS {
        let mut rng = rng::seeded(1000 + seed);
        let n = rng.gen_range(8..48);
        let pc = random_cloud(&mut rng, n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let base = disc.discriminate(&pc, false).unwrap();
        let permuted = disc.discriminate(&pc.select(&order).unwrap(), false).unwrap();
        if base.to_bits() != permuted.to_bits() {
            permutation_failures += 1;
        }
        let t = rng::uniform_vec(&mut rng, 2, 5.0);
        let coords: Vec<f64> = pc.coords().data().iter().enumerate().map(|(i, v)| v + t[i % 2]).collect();
        let moved = PointCloud::new(Tensor::matrix(n, 2, coords).unwrap(), pc.features().clone()).unwrap();
        worst_shift = worst_shift.max((base - disc.discriminate(&moved, false).unwrap()).abs());
    }
    Outcome::new(
        permutation_failures == 0 && worst_shift <= TRANSLATION_TOL,
        format!(
            "{CLOUDS} clouds, {permutation_failures} bitwise permutation mismatches, max translation change {worst_shift:.1e} (<= {TRANSLATION_TOL:e})"
        ),
    )
}
