//! Run settings: per-kind defaults, an optional INI-style file, and flag
//! overrides, applied in that order.
//!
//! The file grammar is `[section]` headers, `key = value` lines and `#`
//! comments. Every key must be known; lists are comma separated.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use gasp_core::training::TrainingConfig;

use crate::error::{CliError, Result};

/// The modality of a dataset, which fixes the file format, the coordinate
/// space and the default architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// PPM/PGM images on `[−1, 1]²`.
    Image,
    /// Occupancy grids on `[−1, 1]³`.
    Voxel,
    /// Lat-lon grids placed on the unit sphere.
    Sphere,
    /// Arbitrary CSV point clouds sharing one layout.
    Points,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Image => "image",
            Kind::Voxel => "voxel",
            Kind::Sphere => "sphere",
            Kind::Points => "points",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "image" => Ok(Kind::Image),
            "voxel" => Ok(Kind::Voxel),
            "sphere" => Ok(Kind::Sphere),
            "points" => Ok(Kind::Points),
            _ => Err(format!("unknown kind `{s}` (expected image, voxel, sphere or points)")),
        }
    }
}

/// A parsed config file: section → key → (value, line number).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

const SECTIONS: [&str; 4] = ["generator", "discriminator", "training", "data"];

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(CliError::usage(format!("config line {line_no}: unknown section [{name}]")));
                }
                sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {line_no}: expected `key = value`")))?;
            let section = current
                .as_ref()
                .ok_or_else(|| CliError::usage(format!("config line {line_no}: key outside any [section]")))?;
            let entries = sections.get_mut(section).expect("section was created");
            let key = key.trim().to_string();
            if entries.contains_key(&key) {
                return Err(CliError::usage(format!("config line {line_no}: `{key}` set twice in [{section}]")));
            }
            entries.insert(key, (value.trim().to_string(), line_no));
        }
        Ok(Self { sections })
    }

    fn entries(&self, section: &str) -> impl Iterator<Item = (&str, &str, usize)> {
        self.sections
            .get(section)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, (v, l))| (k.as_str(), v.as_str(), *l)))
    }

    /// The `[data] kind` entry, if present.
    pub fn kind(&self) -> Result<Option<Kind>> {
        match self.sections.get("data").and_then(|m| m.get("kind")) {
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::usage(format!("config line {line}: {e}"))),
            None => Ok(None),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse()
        .map_err(|_| CliError::usage(format!("config line {line}: `{raw}` is not a valid value for `{key}`")))
}

fn list(key: &str, raw: &str, line: usize) -> Result<Vec<usize>> {
    raw.split(',').map(|v| value(key, v.trim(), line)).collect()
}

fn optional<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<Option<T>> {
    if raw == "none" {
        Ok(None)
    } else {
        value(key, raw, line).map(Some)
    }
}

/// Generator shape: the hypernetwork, the functions it emits and their
/// Fourier encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSettings {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub target_hidden: Vec<usize>,
    pub fourier_m: usize,
    /// `None` disables the encoding.
    pub fourier_sigma: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorSettings {
    pub channels: Vec<usize>,
    /// `None` keeps the default for the coordinate space.
    pub k_neighbors: Option<usize>,
    pub pool_factor: Option<usize>,
    pub norm_p: f64,
    pub weight_hidden: Vec<usize>,
    pub seed: u64,
}

/// Everything `train` needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub kind: Kind,
    pub generator: GeneratorSettings,
    pub discriminator: DiscriminatorSettings,
    pub training: TrainingConfig,
}

/// Fourier scale by image side: coarser images need lower frequencies.
pub fn image_sigma(side: usize) -> f64 {
    match side {
        0..=32 => 1.0,
        33..=64 => 2.0,
        _ => 3.0,
    }
}

impl Settings {
    /// Defaults for a dataset of `kind` whose largest grid side is `side`.
    pub fn defaults(kind: Kind, side: usize) -> Self {
        let generator = GeneratorSettings {
            latent_dim: gasp_core::hypernet::DEFAULT_LATENT_DIM,
            hidden: gasp_core::hypernet::DEFAULT_HIDDEN.to_vec(),
            target_hidden: vec![128; 3],
            fourier_m: 128,
            fourier_sigma: Some(1.0),
            seed: 0,
        };
        let discriminator = DiscriminatorSettings {
            channels: vec![64, 128, 256],
            k_neighbors: None,
            pool_factor: None,
            norm_p: 2.0,
            weight_hidden: vec![16; 4],
            seed: 1,
        };
        let training = TrainingConfig::default();
        let mut s = Self {
            kind,
            generator,
            discriminator,
            training,
        };
        match kind {
            Kind::Image => {
                let sigma = image_sigma(side);
                s.generator.fourier_sigma = Some(sigma);
                let (channels, batch) = match side {
                    0..=32 => (vec![64, 128, 256], 128),
                    33..=64 => (vec![64, 128, 256, 512], 64),
                    _ => (vec![64, 128, 256, 512, 1024], 22),
                };
                s.discriminator.channels = channels;
                s.training.batch_size = batch;
            }
            Kind::Voxel => {
                s.generator.fourier_sigma = None;
                s.discriminator.channels = vec![32, 64, 128, 256];
                s.training.batch_size = 24;
                s.training.lr_generator = 2e-5;
                s.training.lr_discriminator = 8e-5;
            }
            Kind::Sphere => {
                s.generator.fourier_sigma = Some(2.0);
                s.discriminator.channels = vec![64, 128, 256, 512];
                s.training.batch_size = 64;
            }
            Kind::Points => {
                s.discriminator.channels = vec![16, 32, 64];
                s.training.batch_size = 16;
            }
        }
        s
    }

    /// Overrides defaults with every entry of `file`; unknown keys fail.
    pub fn apply_file(&mut self, file: &ConfigFile) -> Result<()> {
        for (key, raw, line) in file.entries("generator") {
            let g = &mut self.generator;
            match key {
                "latent_dim" => g.latent_dim = value(key, raw, line)?,
                "hidden" => g.hidden = list(key, raw, line)?,
                "target_hidden" => g.target_hidden = list(key, raw, line)?,
                "fourier_m" => g.fourier_m = value(key, raw, line)?,
                "fourier_sigma" => g.fourier_sigma = optional(key, raw, line)?,
                "seed" => g.seed = value(key, raw, line)?,
                _ => return Err(unknown("generator", key, line)),
            }
        }
        for (key, raw, line) in file.entries("discriminator") {
            let d = &mut self.discriminator;
            match key {
                "channels" => d.channels = list(key, raw, line)?,
                "k_neighbors" => d.k_neighbors = Some(value(key, raw, line)?),
                "pool_factor" => d.pool_factor = Some(value(key, raw, line)?),
                "norm_p" => d.norm_p = value(key, raw, line)?,
                "weight_hidden" => d.weight_hidden = list(key, raw, line)?,
                "seed" => d.seed = value(key, raw, line)?,
                _ => return Err(unknown("discriminator", key, line)),
            }
        }
        for (key, raw, line) in file.entries("training") {
            let t = &mut self.training;
            match key {
                "lr_generator" => t.lr_generator = value(key, raw, line)?,
                "lr_discriminator" => t.lr_discriminator = value(key, raw, line)?,
                "beta1" => t.beta1 = value(key, raw, line)?,
                "beta2" => t.beta2 = value(key, raw, line)?,
                "batch_size" => t.batch_size = value(key, raw, line)?,
                "epochs" => t.epochs = value(key, raw, line)?,
                "k_subsample" => t.k_subsample = optional(key, raw, line)?,
                "r1_weight" => t.r1_weight = value(key, raw, line)?,
                "seed" => t.seed = value(key, raw, line)?,
                "max_steps" => t.max_steps = optional(key, raw, line)?,
                "checkpoint_every" => t.checkpoint_every = optional(key, raw, line)?,
                _ => return Err(unknown("training", key, line)),
            }
        }
        for (key, _, line) in file.entries("data") {
            if key != "kind" {
                return Err(unknown("data", key, line));
            }
        }
        Ok(())
    }
}

fn unknown(section: &str, key: &str, line: usize) -> CliError {
    CliError::usage(format!("config line {line}: unknown key `{key}` in [{section}]"))
}
