//! Norm lemmas, the Fourier feature and set-discriminator Lipschitz
//! bounds, and power-iteration spectral norms against a Jacobi SVD.

use gasp_autodiff::Tensor;
use gasp_core::lipschitz::{
    random_encoding, random_set_discriminator, rff_bound_report, set_disc_bound, spectral_norm_default,
    verify_lemmas, BoundReport,
};
use gasp_core::rng;
use rand::Rng as _;

use crate::common::Outcome;

const LEMMA_TRIALS: usize = 10_000;
const PAIRS: usize = 100_000;
const ENCODINGS: u64 = 20;
const SET_DISCRIMINATORS: u64 = 3;
const SET_SIZE: usize = 4;
const SVD_MATRICES: u64 = 200;
const SVD_TOL: f64 = 1e-8;

/// Largest singular value by one-sided Jacobi rotations on the columns of
/// a row-major `m × n` matrix.
fn jacobi_sigma_max(m: usize, n: usize, a: &[f64]) -> f64 {
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[i * n + j]).collect()).collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

fn spectral_check() -> (u64, f64) {
    let mut rng = rng::seeded(77);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..SVD_MATRICES {
        let (m, n) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let a = rng::normal_vec(&mut rng, m * n, 1.0);
        let oracle = jacobi_sigma_max(m, n, &a);
        let power = spectral_norm_default(&Tensor::matrix(m, n, a).unwrap()).unwrap();
        let err = (power - oracle).abs() / oracle.max(1.0);
        worst = worst.max(err);
        if err > SVD_TOL {
            failures += 1;
        }
    }
    (failures, worst)
}

fn bound_reports() -> Result<Vec<BoundReport>, gasp_core::Error> {
    let mut reports = verify_lemmas(LEMMA_TRIALS, 2024)?;
    let mut rng = rng::seeded(31);
    let mut rff = Vec::new();
    for i in 0..ENCODINGS {
        let r = rff_bound_report(&random_encoding(&mut rng)?, PAIRS, 500 + i)?;
        rff.push((r.bound, r.empirical));
    }
    reports.push(BoundReport::worst_of("fourier features", rff, ENCODINGS as usize * 2 * PAIRS));
    let mut sets = Vec::new();
    for i in 0..SET_DISCRIMINATORS {
        let sd = random_set_discriminator(&mut rng)?;
        let r = set_disc_bound(&sd, SET_SIZE, PAIRS, 900 + i)?;
        sets.push((r.bound, r.empirical));
    }
    reports.push(BoundReport::worst_of("set discriminator", sets, SET_DISCRIMINATORS as usize * 2 * PAIRS));
    Ok(reports)
}

pub fn run() -> Outcome {
    let reports = match bound_reports() {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("error: {e}")),
    };
    for r in &reports {
        println!("    {r}");
    }
    let violations: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    let (svd_failures, svd_worst) = spectral_check();
    Outcome::new(
        violations.is_empty() && svd_failures == 0,
        format!(
            "{} bound checks, violations {:?}; {SVD_MATRICES} spectral norms, worst relative error {svd_worst:.1e} (<= {SVD_TOL:e})",
            reports.len(),
            violations
        ),
    )
}
