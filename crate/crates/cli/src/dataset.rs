//! Loading a directory of datapoints of one kind.

use std::fs;
use std::path::{Path, PathBuf};

use gasp_core::data::PointCloud;
use gasp_core::formats::{self, Metadata};

use crate::config::Kind;
use crate::error::{CliError, Result};

/// File holding the normalization range of a sphere dataset.
pub const METADATA_FILE: &str = "metadata.txt";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub kind: Kind,
    pub clouds: Vec<PointCloud>,
    /// Grid dimensions of the first datapoint (`[n]` for plain point clouds).
    pub grid: Vec<usize>,
    pub metadata: Option<Metadata>,
}

impl Dataset {
    /// Largest grid side, which picks resolution-dependent defaults.
    pub fn side(&self) -> usize {
        self.grid.iter().copied().max().unwrap_or(1)
    }

    pub fn channels(&self) -> usize {
        self.clouds[0].feature_dim()
    }
}

fn extensions(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::Image => &["ppm", "pgm"],
        Kind::Voxel => &["vox", "txt"],
        Kind::Sphere | Kind::Points => &["csv"],
    }
}

/// Data files of `kind` in `dir`, sorted by name.
pub fn data_files(dir: &Path, kind: Kind) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        let is_metadata = path.file_name().is_some_and(|n| n == METADATA_FILE);
        if path.is_file() && !is_metadata && extensions(kind).contains(&ext.as_str()) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::data(format!(
            "{}: no {kind} files (expected extension {})",
            dir.display(),
            extensions(kind).join(" or ")
        )));
    }
    Ok(files)
}

fn inconsistent(path: &Path, what: &str) -> CliError {
    CliError::data(format!("{}: inconsistent dataset, {what} differs from the first file", path.display()))
}

pub fn load_dataset(dir: &Path, kind: Kind) -> Result<Dataset> {
    let files = data_files(dir, kind)?;
    let mut clouds = Vec::with_capacity(files.len());
    let mut grid = Vec::new();
    let mut metadata = None;
    match kind {
        Kind::Image => {
            for path in &files {
                let img = formats::read_pnm(path)?;
                let dims = vec![img.height, img.width, img.channels];
                if grid.is_empty() {
                    grid = dims;
                } else if grid != dims {
                    return Err(inconsistent(path, "image size or channel count"));
                }
                clouds.push(img.to_pointcloud()?);
            }
            grid.truncate(2);
        }
        Kind::Voxel => {
            for path in &files {
                let vox = formats::read_voxel_text(path)?;
                if grid.is_empty() {
                    grid = vox.dims.to_vec();
                } else if grid != vox.dims {
                    return Err(inconsistent(path, "voxel grid size"));
                }
                clouds.push(vox.to_pointcloud()?);
            }
        }
        Kind::Sphere => {
            let meta = formats::read_metadata(&dir.join(METADATA_FILE))?;
            for path in &files {
                let g = formats::read_latlon_csv(path)?;
                let dims = vec![g.height, g.width];
                if grid.is_empty() {
                    grid = dims;
                } else if grid != dims {
                    return Err(inconsistent(path, "lat-lon grid size"));
                }
                clouds.push(g.to_pointcloud(&meta)?);
            }
            metadata = Some(meta);
        }
        Kind::Points => {
            for path in &files {
                let pc = formats::read_csv_pointcloud(path)?;
                if let Some(first) = clouds.first() {
                    let first: &PointCloud = first;
                    if (pc.coord_dim(), pc.feature_dim()) != (first.coord_dim(), first.feature_dim()) {
                        return Err(inconsistent(path, "column layout"));
                    }
                } else {
                    grid = vec![pc.len()];
                }
                clouds.push(pc);
            }
        }
    }
    Ok(Dataset {
        kind,
        clouds,
        grid,
        metadata,
    })
}

/// The kind implied by a single file's extension.
pub fn kind_of_file(path: &Path) -> Result<Kind> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "ppm" | "pgm" | "pnm" => Ok(Kind::Image),
        "vox" | "txt" => Ok(Kind::Voxel),
        "csv" => Ok(Kind::Points),
        _ => Err(CliError::data(format!(
            "{}: unrecognized extension (expected ppm, pgm, csv, vox or txt)",
            path.display()
        ))),
    }
}
