//! Fitting a 32×32 target with fine detail, with and without Fourier
//! features, under the same step budget.

use std::f64::consts::TAU;

use gasp_autodiff::Tensor;
use gasp_core::data::{grid_coordinates, PointCloud};
use gasp_core::function_rep::{fit_single, FitConfig, MlpArchitecture};
use gasp_core::rff::FourierEncoding;

use crate::common::Outcome;

const SIDE: usize = 32;
const STEPS: usize = 2000;
const TARGET_MSE: f64 = 1e-3;
const CONTROL_RATIO: f64 = 5.0;

/// Pixel `(r, c)` of a target whose finest components complete 8 cycles
/// across the image: a checkerboard of 2-pixel squares, a sinusoid along
/// the rows and a ramp along the columns.
fn target_value(r: usize, c: usize, y: f64, x: f64) -> f64 {
    let checker = if (r / 2 + c / 2) % 2 == 0 { 1.0 } else { -1.0 };
    0.4 * checker + 0.25 * (TAU * 4.0 * y).sin() + 0.3 * x
}

fn target() -> PointCloud {
    let coords = grid_coordinates(&[SIDE, SIDE]).unwrap();
    let values = (0..SIDE * SIDE)
        .map(|i| {
            let (r, c) = (i / SIDE, i % SIDE);
            target_value(r, c, coords.data()[2 * i], coords.data()[2 * i + 1])
        })
        .collect();
    PointCloud::new(coords, Tensor::matrix(SIDE * SIDE, 1, values).unwrap()).unwrap()
}

fn fit(data: &PointCloud, encoding: Option<FourierEncoding>) -> Result<f64, String> {
    let input = encoding.as_ref().map_or(2, FourierEncoding::output_dim);
    let arch = MlpArchitecture::new(input, vec![128; 3], 1).map_err(|e| e.to_string())?;
    let config = FitConfig {
        steps: STEPS,
        lr: 1e-3,
        seed: 0,
    };
    Ok(fit_single(data, &arch, encoding, &config).map_err(|e| e.to_string())?.final_loss)
}

pub fn run() -> Outcome {
    Outcome::from_result((|| {
        let data = target();
        let enc = FourierEncoding::sample(64, 2, 1.0, 0).map_err(|e| e.to_string())?;
        let with = fit(&data, Some(enc))?;
        let without = fit(&data, None)?;
        let pass = with <= TARGET_MSE && without >= CONTROL_RATIO * with;
        Ok(Outcome::new(
            pass,
            format!(
                "MSE with features {with:.2e} (<= {TARGET_MSE:e}), without {without:.2e} ({:.0}x, needs >= {CONTROL_RATIO}x)",
                without / with
            ),
        ))
    })())
}
