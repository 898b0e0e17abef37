//! One sampled function queried at many resolutions, through the library
//! and through the `sample` command.

use std::path::Path;
use std::process::Command;

use gasp_autodiff::Tensor;
use gasp_core::data::grid_coordinates;
use gasp_core::formats::{self, Image};
use gasp_core::function_rep::MlpArchitecture;
use gasp_core::hypernet::{sample_latent, Hypernetwork};
use gasp_core::rff::FourierEncoding;
use gasp_core::rng;

use crate::common::Outcome;

const SHARED: usize = 64;
const LIBRARY_SIDES: [usize; 3] = [16, 64, 256];
const COARSE: usize = 16;
const FINE: usize = 31;

const TINY_MODEL: &str = "\
[generator]
latent_dim = 4
hidden = 16
target_hidden = 8
fourier_m = 4

[discriminator]
channels = 4, 8
weight_hidden = 4

[training]
batch_size = 2
epochs = 2
";

/// Values at `SHARED` fixed coordinates appended to each full grid request.
fn library_check() -> Result<(usize, usize), String> {
    let enc = FourierEncoding::sample(32, 2, 2.0, 4).map_err(|e| e.to_string())?;
    let target = MlpArchitecture::new(enc.output_dim(), vec![32, 32], 3).map_err(|e| e.to_string())?;
    let generator = Hypernetwork::new(16, &[64], target, Some(enc), 9).map_err(|e| e.to_string())?;
    let z = sample_latent(16, 21).map_err(|e| e.to_string())?;
    let shared = rng::uniform_vec(&mut rng::seeded(8), SHARED * 2, 1.0);

    let mut reference: Option<Vec<u64>> = None;
    let mut mismatches = 0;
    for side in LIBRARY_SIDES {
        let grid = grid_coordinates(&[side, side]).map_err(|e| e.to_string())?;
        let rows = side * side + SHARED;
        let coords = Tensor::matrix(rows, 2, [grid.data(), &shared].concat()).map_err(|e| e.to_string())?;
        let values = generator.generate_features(&z, &coords).map_err(|e| e.to_string())?;
        let tail: Vec<u64> = values.data()[side * side * 3..].iter().map(|v| v.to_bits()).collect();
        match &reference {
            None => reference = Some(tail),
            Some(r) => mismatches += r.iter().zip(&tail).filter(|(a, b)| a != b).count(),
        }
    }
    Ok((mismatches, SHARED * 3))
}

fn gasp(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gasp")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("gasp {} failed: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Samples a briefly trained image model at two resolutions whose grids
/// nest (every other pixel of the fine grid lies on the coarse grid) and
/// counts differing pixels at the shared positions.
fn command_check() -> Result<(usize, usize), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    std::fs::create_dir(&data).map_err(|e| e.to_string())?;
    let mut rng = rng::seeded(12);
    for i in 0..4 {
        let pixels = rng::uniform_vec(&mut rng, 8 * 8 * 3, 1.0).iter().map(|v| ((v + 1.0) * 127.5) as u8).collect();
        let image = Image::new(8, 8, 3, pixels).map_err(|e| e.to_string())?;
        formats::write_ppm(&data.join(format!("img_{i}.ppm")), &image).map_err(|e| e.to_string())?;
    }
    let config = dir.path().join("model.cfg");
    std::fs::write(&config, TINY_MODEL).map_err(|e| e.to_string())?;
    let run = dir.path().join("run");
    gasp(&["train", "--data", path(&data), "--kind", "image", "--config", path(&config), "--out", path(&run)])?;

    let samples = dir.path().join("samples");
    let resolutions = format!("{COARSE},{FINE}");
    let ckpt = run.join("checkpoint.gasp");
    gasp(&["sample", "--ckpt", path(&ckpt), "--resolution", &resolutions, "--seed", "5", "--out", path(&samples)])?;

    let read = |r: usize| formats::read_pnm(&samples.join(format!("sample_000_r{r}.ppm"))).map_err(|e| e.to_string());
    let (coarse, fine) = (read(COARSE)?, read(FINE)?);
    let mut mismatches = 0;
    for i in 0..COARSE {
        for j in 0..COARSE {
            let a = (i * COARSE + j) * 3;
            let b = (2 * i * FINE + 2 * j) * 3;
            mismatches += (0..3).filter(|c| coarse.pixels[a + c] != fine.pixels[b + c]).count();
        }
    }
    Ok((mismatches, COARSE * COARSE * 3))
}

pub fn run() -> Outcome {
    Outcome::from_result((|| {
        let (lib_bad, lib_total) = library_check()?;
        let (cmd_bad, cmd_total) = command_check()?;
        Ok(Outcome::new(
            lib_bad == 0 && cmd_bad == 0,
            format!(
                "{lib_bad} of {lib_total} shared values differ across {LIBRARY_SIDES:?} grids; \
                 {cmd_bad} of {cmd_total} nested pixel channels differ between {COARSE}px and {FINE}px samples"
            ),
        ))
    })())
}
