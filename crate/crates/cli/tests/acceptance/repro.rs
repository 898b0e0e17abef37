//! Seeded determinism, checkpoint continuation and file-format round trips.

use gasp_core::checkpoint::Checkpoint;
use gasp_core::data::PointCloud;
use gasp_core::formats::{
    read_csv_pointcloud, read_latlon_csv, read_metadata, read_pnm, read_voxel_text, write_csv_pointcloud,
    write_metadata, write_pgm, write_ppm, write_voxel_text, encode_latlon_csv, Image, LatLonGrid, Metadata, VoxelGrid,
};
use gasp_core::function_rep::{FunctionRep, MlpArchitecture};
use gasp_core::hypernet::Hypernetwork;
use gasp_core::persist::{function_checkpoint, function_from_checkpoint, trainer_checkpoint, trainer_from_checkpoint};
use gasp_core::pointconv::{DiscriminatorConfig, DiscriminatorStack};
use gasp_core::rff::FourierEncoding;
use gasp_core::rng::{self, Rng};
use gasp_core::toy::sinusoid_dataset;
use gasp_core::training::{LossRecord, Trainer, TrainingConfig};
use rand::Rng as _;

use crate::common::Outcome;

const HISTORY_STEPS: usize = 20;
const BEFORE_SAVE: usize = 5;
const AFTER_SAVE: usize = 10;
const ROUND_TRIPS: u64 = 100;

type Res<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn trainer(seed: u64) -> Res<Trainer<DiscriminatorStack>> {
    let enc = FourierEncoding::sample(8, 1, 1.0, seed).map_err(err)?;
    let target = MlpArchitecture::new(enc.output_dim(), vec![16, 16], 1).map_err(err)?;
    let generator = Hypernetwork::new(8, &[32], target, Some(enc), seed).map_err(err)?;
    let disc = DiscriminatorStack::new(DiscriminatorConfig::new(1, 1, vec![4, 8, 16]), seed).map_err(err)?;
    let config = TrainingConfig {
        batch_size: 4,
        epochs: 100,
        k_subsample: Some(24),
        seed,
        ..Default::default()
    };
    Trainer::new(generator, disc, config).map_err(err)
}

fn same_history(a: &[LossRecord], b: &[LossRecord]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bit_eq(y))
}

fn seeded_histories() -> Res<(bool, bool)> {
    let data = sinusoid_dataset(32, 32, 3).map_err(err)?;
    let run = |seed| -> Res<Vec<LossRecord>> {
        let mut t = trainer(seed)?;
        for _ in 0..HISTORY_STEPS {
            t.step(&data).map_err(err)?;
        }
        Ok(t.history)
    };
    let (a, b, c) = (run(4)?, run(4)?, run(5)?);
    Ok((same_history(&a, &b), !same_history(&a, &c)))
}

fn continuation(dir: &std::path::Path) -> Res<bool> {
    let data = sinusoid_dataset(32, 32, 3).map_err(err)?;
    let mut original = trainer(8)?;
    for _ in 0..BEFORE_SAVE {
        original.step(&data).map_err(err)?;
    }
    let path = dir.join("trainer.gasp");
    trainer_checkpoint(&original).save(&path).map_err(err)?;
    let mut resumed = trainer_from_checkpoint(&Checkpoint::load(&path).map_err(err)?).map_err(err)?;
    for _ in 0..AFTER_SAVE {
        original.step(&data).map_err(err)?;
        resumed.step(&data).map_err(err)?;
    }
    Ok(same_history(&original.history, &resumed.history)
        && original.generator.net().params() == resumed.generator.net().params())
}

/// Finite values spanning many magnitudes, including signed zeros and
/// subnormals.
fn awkward(rng: &mut Rng) -> f64 {
    match rng.gen_range(0..6) {
        0 => 0.0,
        1 => -0.0,
        2 => f64::MIN_POSITIVE / 3.0,
        3 => rng.gen_range(-1.0..1.0),
        4 => rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-300..300)),
        _ => f64::from_bits(rng.gen::<u64>() & !(0x7ff << 52) | (rng.gen_range(1..2046u64) << 52)),
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Counts round-trip failures per format over random instances.
fn formats(dir: &std::path::Path) -> Res<Vec<(&'static str, u64)>> {
    let mut failures = vec![("pnm", 0), ("csv", 0), ("voxel", 0), ("metadata", 0), ("latlon", 0), ("checkpoint", 0)];
    let mut rng = rng::seeded(2718);
    for i in 0..ROUND_TRIPS {
        let (w, h) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let channels = if i % 2 == 0 { 1 } else { 3 };
        let image = Image::new(w, h, channels, (0..w * h * channels).map(|_| rng.gen()).collect()).map_err(err)?;
        let path = dir.join(if channels == 1 { "a.pgm" } else { "a.ppm" });
        if channels == 1 { write_pgm(&path, &image) } else { write_ppm(&path, &image) }.map_err(err)?;
        failures[0].1 += u64::from(read_pnm(&path).map_err(err)? != image);

        let (n, d, k) = (rng.gen_range(1..20), rng.gen_range(1..4), rng.gen_range(1..4));
        let coords: Vec<f64> = (0..n * d).map(|_| awkward(&mut rng)).collect();
        let feats: Vec<f64> = (0..n * k).map(|_| awkward(&mut rng)).collect();
        let pc = PointCloud::from_rows(d, k, coords, feats).map_err(err)?;
        write_csv_pointcloud(&dir.join("a.csv"), &pc).map_err(err)?;
        let back = read_csv_pointcloud(&dir.join("a.csv")).map_err(err)?;
        let same = bits(back.coords().data()) == bits(pc.coords().data())
            && bits(back.features().data()) == bits(pc.features().data())
            && back.coords().shape() == pc.coords().shape();
        failures[1].1 += u64::from(!same);

        let dims = [rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6)];
        let grid = VoxelGrid::new(dims, (0..dims.iter().product()).map(|_| u8::from(rng.gen::<bool>())).collect())
            .map_err(err)?;
        write_voxel_text(&dir.join("a.vox"), &grid).map_err(err)?;
        failures[2].1 += u64::from(read_voxel_text(&dir.join("a.vox")).map_err(err)? != grid);

        let lo = awkward(&mut rng).clamp(-1e300, 1e300);
        let meta = Metadata {
            feature_min: lo,
            feature_max: lo + rng.gen_range(1e-3..1e3),
            kind: format!("field_{i}"),
        };
        write_metadata(&dir.join("metadata.txt"), &meta).map_err(err)?;
        let back = read_metadata(&dir.join("metadata.txt")).map_err(err)?;
        let same = back.feature_min.to_bits() == meta.feature_min.to_bits()
            && back.feature_max.to_bits() == meta.feature_max.to_bits()
            && back.kind == meta.kind;
        failures[3].1 += u64::from(!same);

        let (gh, gw) = (rng.gen_range(1..8), rng.gen_range(1..8));
        let latlon = LatLonGrid {
            height: gh,
            width: gw,
            values: (0..gh * gw).map(|_| awkward(&mut rng)).collect(),
        };
        std::fs::write(dir.join("a_latlon.csv"), encode_latlon_csv(&latlon)).map_err(err)?;
        let back = read_latlon_csv(&dir.join("a_latlon.csv")).map_err(err)?;
        failures[4].1 += u64::from(back.height != gh || back.width != gw || bits(&back.values) != bits(&latlon.values));

        let enc = FourierEncoding::sample(rng.gen_range(1..6), 2, rng.gen_range(0.5..4.0), rng.gen()).map_err(err)?;
        let arch = MlpArchitecture::new(enc.output_dim(), vec![rng.gen_range(1..8)], 3).map_err(err)?;
        let rep = FunctionRep::init(arch, Some(enc), rng.gen()).map_err(err)?;
        function_checkpoint(&rep).save(&dir.join("f.gasp")).map_err(err)?;
        let loaded = Checkpoint::load(&dir.join("f.gasp")).map_err(err)?;
        let back = function_from_checkpoint(&loaded).map_err(err)?;
        failures[5].1 += u64::from(back != rep || loaded.to_bytes() != function_checkpoint(&rep).to_bytes());
    }
    Ok(failures)
}

pub fn run() -> Outcome {
    Outcome::from_result((|| {
        let dir = tempfile::tempdir().map_err(err)?;
        let (same_seed, different_seed) = seeded_histories()?;
        let resumed = continuation(dir.path())?;
        let formats = formats(dir.path())?;
        let bad: Vec<String> = formats.iter().filter(|f| f.1 > 0).map(|(n, c)| format!("{n}: {c}")).collect();
        Ok(Outcome::new(
            same_seed && different_seed && resumed && bad.is_empty(),
            format!(
                "identical seeds {} bitwise over {HISTORY_STEPS} steps, a different seed {}; resumed run {} for {AFTER_SAVE} steps; \
                 {ROUND_TRIPS} round trips per format, failures {:?}",
                if same_seed { "match" } else { "differ" },
                if different_seed { "differs" } else { "matches" },
                if resumed { "matches" } else { "diverges" },
                bad
            ),
        ))
    })())
}
