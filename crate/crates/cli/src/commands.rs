//! The subcommands.

use std::fs;
use std::path::Path;

use gasp_autodiff::Tensor;
use gasp_core::checkpoint::Checkpoint;
use gasp_core::data::{grid_coordinates, latlon_grid_coordinates, GridKind, PointCloud};
use gasp_core::formats::{self, Image, LatLonGrid, Metadata, VoxelGrid};
use gasp_core::function_rep::{fit_single, FitConfig, FunctionRep, MlpArchitecture};
use gasp_core::hypernet::{sample_latent_with, Hypernetwork, LatentCode};
use gasp_core::lipschitz;
use gasp_core::persist::{self, KIND_FUNCTION, KIND_GASP};
use gasp_core::pointconv::{DiscriminatorConfig, DiscriminatorStack};
use gasp_core::rff::FourierEncoding;
use gasp_core::rng;
use gasp_core::toy::sinusoid_dataset;
use gasp_core::training::{validate_dataset, write_loss_csv, Trainer};

use crate::config::{image_sigma, ConfigFile, Kind, Settings};
use crate::dataset::{kind_of_file, load_dataset, Dataset};
use crate::error::{CliError, Result};
use crate::{FitArgs, GenToyArgs, SampleArgs, TrainArgs, VerifyArgs};

pub const FINAL_CHECKPOINT: &str = "checkpoint.gasp";
pub const LOSS_FILE: &str = "losses.csv";

/// What a model was trained on, stored alongside it so `sample` can render
/// the right file type.
#[derive(Debug, Clone, PartialEq)]
pub struct DataInfo {
    pub kind: Kind,
    pub channels: usize,
    pub metadata: Option<Metadata>,
}

impl DataInfo {
    fn put(&self, ck: &mut Checkpoint) {
        ck.set("data.kind", self.kind);
        ck.set("data.channels", self.channels);
        if let Some(m) = &self.metadata {
            ck.set("data.feature_min", m.feature_min);
            ck.set("data.feature_max", m.feature_max);
            ck.set("data.meta_kind", &m.kind);
        }
    }

    fn get(ck: &Checkpoint) -> Result<Self> {
        let kind = ck
            .get("data.kind")?
            .parse()
            .map_err(|e: String| CliError::data(format!("checkpoint: {e}")))?;
        let metadata = match kind {
            Kind::Sphere => Some(Metadata {
                feature_min: ck.parse("data.feature_min")?,
                feature_max: ck.parse("data.feature_max")?,
                kind: ck.get("data.meta_kind")?.to_string(),
            }),
            _ => None,
        };
        Ok(Self {
            kind,
            channels: ck.parse("data.channels")?,
            metadata,
        })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

/// One datapoint with its kind and largest grid side.
fn load_single(path: &Path) -> Result<(PointCloud, Kind, usize)> {
    let kind = kind_of_file(path)?;
    let (pc, side) = match kind {
        Kind::Image => {
            let img = formats::read_pnm(path)?;
            (img.to_pointcloud()?, img.width.max(img.height))
        }
        Kind::Voxel => {
            let vox = formats::read_voxel_text(path)?;
            (vox.to_pointcloud()?, vox.dims.iter().copied().max().unwrap_or(1))
        }
        _ => {
            let pc = formats::read_csv_pointcloud(path)?;
            let n = pc.len();
            (pc, n)
        }
    };
    Ok((pc, kind, side))
}

fn encoding(m: usize, d: usize, sigma: Option<f64>, seed: u64) -> Result<Option<FourierEncoding>> {
    Ok(sigma.map(|s| FourierEncoding::sample(m, d, s, seed)).transpose()?)
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let (pc, kind, side) = load_single(&args.input)?;
    let sigma = match (args.no_encoding, args.sigma) {
        (true, _) => None,
        (false, Some(s)) => Some(s),
        (false, None) => match kind {
            Kind::Image => Some(image_sigma(side)),
            Kind::Voxel => None,
            _ => Some(1.0),
        },
    };
    let (d, k) = (pc.coord_dim(), pc.feature_dim());
    let enc = encoding(args.m, d, sigma, args.seed)?;
    let input = enc.as_ref().map_or(d, FourierEncoding::output_dim);
    let arch = MlpArchitecture::new(input, args.hidden.clone(), k).map_err(|e| CliError::usage(e.to_string()))?;
    eprintln!("fitting {} points of {} for {} steps", pc.len(), args.input.display(), args.steps);
    let config = FitConfig {
        steps: args.steps,
        lr: args.lr,
        seed: args.seed,
    };
    let result = fit_single(&pc, &arch, enc, &config)?;
    let mut ck = persist::function_checkpoint(&result.rep);
    DataInfo {
        kind,
        channels: k,
        metadata: None,
    }
    .put(&mut ck);
    create_parent(&args.out)?;
    ck.save(&args.out)?;
    println!("final mse {:e}", result.final_loss);
    Ok(())
}

fn build_models(settings: &Settings, data: &Dataset) -> Result<(Hypernetwork, DiscriminatorStack)> {
    let first = &data.clouds[0];
    let (d, k) = (first.coord_dim(), first.feature_dim());
    let g = &settings.generator;
    let enc = encoding(g.fourier_m, d, g.fourier_sigma, g.seed)?;
    let input = enc.as_ref().map_or(d, FourierEncoding::output_dim);
    let target = MlpArchitecture::new(input, g.target_hidden.clone(), k).map_err(|e| CliError::usage(e.to_string()))?;
    let generator =
        Hypernetwork::new(g.latent_dim, &g.hidden, target, enc, g.seed).map_err(|e| CliError::usage(e.to_string()))?;

    let s = &settings.discriminator;
    let mut config = match data.kind {
        Kind::Sphere => DiscriminatorConfig::for_surface(d, 2, k, s.channels.clone()),
        _ => DiscriminatorConfig::new(d, k, s.channels.clone()),
    };
    config.k_neighbors = s.k_neighbors.unwrap_or(config.k_neighbors);
    config.pool_factor = s.pool_factor.unwrap_or(config.pool_factor);
    config.norm_p = s.norm_p;
    config.weight_hidden = s.weight_hidden.clone();
    let disc = DiscriminatorStack::new(config, s.seed).map_err(|e| CliError::usage(e.to_string()))?;
    Ok((generator, disc))
}

fn save_run(trainer: &Trainer<DiscriminatorStack>, info: &DataInfo, path: &Path) -> Result<()> {
    let mut ck = persist::trainer_checkpoint(trainer);
    info.put(&mut ck);
    ck.save(path)?;
    Ok(())
}

fn new_trainer(args: &TrainArgs, data: &Dataset, file: Option<&ConfigFile>) -> Result<Trainer<DiscriminatorStack>> {
    let mut settings = Settings::defaults(data.kind, data.side());
    if let Some(f) = file {
        settings.apply_file(f)?;
    }
    let t = &mut settings.training;
    t.k_subsample = args.k_subsample.or(t.k_subsample);
    t.batch_size = args.batch_size.unwrap_or(t.batch_size);
    t.seed = args.seed.unwrap_or(t.seed);
    t.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let (generator, disc) = build_models(&settings, data)?;
    Trainer::new(generator, disc, settings.training).map_err(|e| CliError::usage(e.to_string()))
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Some(ConfigFile::parse(&text)?)
        }
        None => None,
    };
    let file_kind = file.as_ref().map(ConfigFile::kind).transpose()?.flatten();
    let kind = args
        .kind
        .or(file_kind)
        .ok_or_else(|| CliError::usage("--kind is required (or `kind` under [data] in the config file)"))?;
    let data = load_dataset(&args.data, kind)?;
    eprintln!("loaded {} {kind} datapoints of {} points", data.clouds.len(), data.clouds[0].len());

    let mut trainer = match &args.resume {
        Some(path) => persist::trainer_from_checkpoint(&Checkpoint::load(path)?)?,
        None => new_trainer(args, &data, file.as_ref())?,
    };
    // Steps and epochs may be extended on resume, nothing else.
    trainer.config.epochs = args.epochs.unwrap_or(trainer.config.epochs);
    trainer.config.max_steps = args.max_steps.or(trainer.config.max_steps);
    trainer.config.checkpoint_every = args.checkpoint_every.or(trainer.config.checkpoint_every);
    validate_dataset(&data.clouds, &trainer.generator, &trainer.discriminator, &trainer.config)?;

    let info = DataInfo {
        kind,
        channels: data.channels(),
        metadata: data.metadata.clone(),
    };
    create_dir(&args.out)?;
    let total = trainer.config.total_steps(data.clouds.len());
    let log_every = args.log_every.max(1);
    let mut failure = None;
    while trainer.steps_done() < total {
        match trainer.step(&data.clouds) {
            Ok(r) => {
                if r.step % log_every == 0 || r.step == total {
                    eprintln!(
                        "step {}/{total} d_loss {:.4} g_loss {:.4} r1 {:.4} D(real) {:.3} D(fake) {:.3}",
                        r.step, r.d_loss, r.g_loss, r.r1, r.d_real, r.d_fake
                    );
                }
                if trainer.config.checkpoint_every.is_some_and(|every| r.step % every == 0) {
                    save_run(&trainer, &info, &args.out.join(format!("checkpoint_{:06}.gasp", r.step)))?;
                }
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    save_run(&trainer, &info, &args.out.join(FINAL_CHECKPOINT))?;
    write_loss_csv(&args.out.join(LOSS_FILE), &trainer.history)?;
    if let Some(e) = failure {
        eprintln!("stopped at step {}; the last good state is saved", trainer.steps_done());
        return Err(e.into());
    }
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

/// A trained model that maps a latent code and coordinates to features.
enum Sampler {
    Gasp(Hypernetwork),
    Function(FunctionRep),
}

impl Sampler {
    fn coord_dim(&self) -> usize {
        match self {
            Sampler::Gasp(g) => g.coord_dim(),
            Sampler::Function(f) => f.coord_dim(),
        }
    }

    fn features(&self, z: &LatentCode, coords: &Tensor) -> Result<Tensor> {
        Ok(match self {
            Sampler::Gasp(g) => g.generate_features(z, coords)?,
            Sampler::Function(f) => f.evaluate(coords)?,
        })
    }
}

/// Coordinates of a side-`r` grid for `kind`.
pub fn sample_coordinates(kind: Kind, r: usize, coord_dim: usize) -> Result<Tensor> {
    Ok(match kind {
        Kind::Image => grid_coordinates(&[r, r])?,
        Kind::Voxel => grid_coordinates(&[r, r, r])?,
        Kind::Sphere => latlon_grid_coordinates(r, 2 * r)?,
        Kind::Points => grid_coordinates(&vec![r; coord_dim])?,
    })
}

fn write_sample(info: &DataInfo, r: usize, features: &Tensor, coords: Tensor, threshold: f64, stem: &Path) -> Result<()> {
    match info.kind {
        Kind::Image => {
            let img = Image::from_features(r, r, info.channels, features.data())?;
            if info.channels == 1 {
                formats::write_pgm(&stem.with_extension("pgm"), &img)?;
            } else {
                formats::write_ppm(&stem.with_extension("ppm"), &img)?;
            }
        }
        Kind::Voxel => {
            let vox = VoxelGrid::from_features([r, r, r], features.data(), threshold)?;
            formats::write_voxel_text(&stem.with_extension("vox"), &vox)?;
        }
        Kind::Sphere => {
            let meta = info.metadata.as_ref().ok_or_else(|| CliError::data("checkpoint lacks metadata"))?;
            let kind = GridKind::LatLon {
                min: meta.feature_min,
                max: meta.feature_max,
            };
            let grid = LatLonGrid {
                height: r,
                width: 2 * r,
                values: features.data().iter().map(|&f| kind.denormalize(f)).collect(),
            };
            let path = stem.with_extension("csv");
            fs::write(&path, formats::encode_latlon_csv(&grid)).map_err(|e| CliError::io(&path, e))?;
        }
        Kind::Points => {
            let pc = PointCloud::new(coords, features.clone())?;
            formats::write_csv_pointcloud(&stem.with_extension("csv"), &pc)?;
        }
    }
    Ok(())
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    if args.resolution.contains(&0) {
        return Err(CliError::usage("resolutions must be positive"));
    }
    if args.count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::usage("--threshold must lie in [0, 1]"));
    }
    let ck = Checkpoint::load(&args.ckpt)?;
    let info = DataInfo::get(&ck)?;
    let (sampler, latent_dim) = match ck.get("model")? {
        KIND_GASP => {
            let g = persist::generator_from_checkpoint(&ck)?;
            let dim = g.latent_dim();
            (Sampler::Gasp(g), dim)
        }
        KIND_FUNCTION => (Sampler::Function(persist::function_from_checkpoint(&ck)?), 0),
        other => return Err(CliError::data(format!("checkpoint holds an unknown model `{other}`"))),
    };
    create_dir(&args.out)?;
    let mut rng = rng::seeded(args.seed);
    for i in 0..args.count {
        let z = match sampler {
            Sampler::Gasp(_) => sample_latent_with(latent_dim, &mut rng)?,
            Sampler::Function(_) => LatentCode(Vec::new()),
        };
        for &r in &args.resolution {
            let coords = sample_coordinates(info.kind, r, sampler.coord_dim())?;
            let features = sampler.features(&z, &coords)?;
            let stem = args.out.join(format!("sample_{i:03}_r{r}"));
            write_sample(&info, r, &features, coords, args.threshold, &stem)?;
        }
        eprintln!("sample {}/{}", i + 1, args.count);
    }
    Ok(())
}

pub fn verify(args: &VerifyArgs) -> Result<()> {
    if args.trials == 0 || args.pairs == 0 {
        return Err(CliError::usage("--trials and --pairs must be at least 1"));
    }
    eprintln!("verifying with {} trials and {} pairs per estimate", args.trials, args.pairs);
    let reports = lipschitz::verify_all(args.trials, args.pairs, args.seed)?;
    print!("{}", lipschitz::report_text(&reports));
    if let Some(path) = &args.csv {
        create_parent(path)?;
        fs::write(path, lipschitz::report_csv(&reports)).map_err(|e| CliError::io(path, e))?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("bound violated: {}", failed.join(", "))))
    }
}

pub fn gen_toy(args: &GenToyArgs) -> Result<()> {
    if args.count == 0 || args.points == 0 {
        return Err(CliError::usage("--count and --points must be at least 1"));
    }
    let data = sinusoid_dataset(args.count, args.points, args.seed)?;
    create_dir(&args.out)?;
    let width = args.count.to_string().len().max(4);
    for (i, pc) in data.iter().enumerate() {
        formats::write_csv_pointcloud(&args.out.join(format!("curve_{i:0width$}.csv")), pc)?;
    }
    eprintln!("wrote {} curves to {}", data.len(), args.out.display());
    Ok(())
}
