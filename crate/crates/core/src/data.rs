//! Point clouds and the grid conversions that produce them.
//!
//! A datapoint is a set of coordinate/feature pairs. Grid coordinates are
//! normalized per axis to `−1 + 2i/(N−1)` (a single-sample axis maps to 0)
//! and features to `[−1, 1]`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use gasp_autodiff::Tensor;
use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Paired coordinates `[n, d]` and features `[n, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Tensor,
    features: Tensor,
}

impl PointCloud {
    pub fn new(coords: Tensor, features: Tensor) -> Result<Self> {
        if coords.ndim() != 2 || features.ndim() != 2 {
            return Err(Error::dim(format!(
                "point cloud needs 2-D coordinate and feature arrays, got {:?} and {:?}",
                coords.shape(),
                features.shape()
            )));
        }
        if coords.shape()[0] != features.shape()[0] {
            return Err(Error::dim(format!(
                "{} coordinate rows but {} feature rows",
                coords.shape()[0],
                features.shape()[0]
            )));
        }
        Ok(Self { coords, features })
    }

    /// Builds a cloud from flat row-major buffers.
    pub fn from_rows(dim: usize, feature_dim: usize, coords: Vec<f64>, features: Vec<f64>) -> Result<Self> {
        if dim == 0 || feature_dim == 0 {
            return Err(Error::invalid("coordinate and feature dimensions must be at least 1"));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::dim(format!("{} coordinate values do not form {dim}-D rows", coords.len())));
        }
        let n = coords.len() / dim;
        if features.len() != n * feature_dim {
            return Err(Error::dim(format!(
                "{n} points need {} feature values, got {}",
                n * feature_dim,
                features.len()
            )));
        }
        Self::new(Tensor::matrix(n, dim, coords)?, Tensor::matrix(n, feature_dim, features)?)
    }

    pub fn len(&self) -> usize {
        self.coords.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord_dim(&self) -> usize {
        self.coords.shape()[1]
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn coords(&self) -> &Tensor {
        &self.coords
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn coord_row(&self, i: usize) -> &[f64] {
        let d = self.coord_dim();
        &self.coords.data()[i * d..(i + 1) * d]
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        let k = self.feature_dim();
        &self.features.data()[i * k..(i + 1) * k]
    }

    /// Same coordinates with new features.
    pub fn with_features(&self, features: Tensor) -> Result<Self> {
        Self::new(self.coords.clone(), features)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("cannot select zero rows"));
        }
        let (d, k) = (self.coord_dim(), self.feature_dim());
        let mut coords = Vec::with_capacity(indices.len() * d);
        let mut features = Vec::with_capacity(indices.len() * k);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("row {i} out of range for {} points", self.len())));
            }
            coords.extend_from_slice(self.coord_row(i));
            features.extend_from_slice(self.feature_row(i));
        }
        Self::from_rows(d, k, coords, features)
    }

    /// `k` rows drawn uniformly without replacement.
    pub fn subsample(&self, k: usize, seed: u64) -> Result<Self> {
        self.subsample_with(k, &mut rng::seeded(seed))
    }

    pub fn subsample_with(&self, k: usize, rng: &mut Rng) -> Result<Self> {
        let n = self.len();
        if k == 0 || k > n {
            return Err(Error::invalid(format!("subsample size {k} must lie in 1..={n}")));
        }
        let picks = index::sample(rng, n, k).into_vec();
        self.select(&picks)
    }
}

/// How stored grid values map to features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    /// 8-bit intensities in `[0, 255]`; coordinates are `d`-D grid positions.
    Image,
    /// Occupancy in `{0, 1}`.
    Voxel,
    /// Values on a latitude/longitude grid, normalized against a known
    /// range; coordinates are points on the unit sphere.
    LatLon { min: f64, max: f64 },
}

impl GridKind {
    pub fn name(&self) -> &'static str {
        match self {
            GridKind::Image => "image",
            GridKind::Voxel => "voxel",
            GridKind::LatLon { .. } => "latlon",
        }
    }

    fn storage_range(&self) -> (f64, f64) {
        match *self {
            GridKind::Image => (0.0, 255.0),
            GridKind::Voxel => (0.0, 1.0),
            GridKind::LatLon { min, max } => (min, max),
        }
    }

    /// Maps a stored value to `[−1, 1]`.
    pub fn normalize(&self, value: f64) -> f64 {
        let (lo, hi) = self.storage_range();
        2.0 * (value - lo) / (hi - lo) - 1.0
    }

    /// Inverse of [`GridKind::normalize`].
    pub fn denormalize(&self, feature: f64) -> f64 {
        let (lo, hi) = self.storage_range();
        lo + (feature + 1.0) * 0.5 * (hi - lo)
    }
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape of a stored grid: spatial dims (e.g. `[H, W]` or `[D, H, W]`) and
/// channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub kind: GridKind,
    pub channels: usize,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, kind: GridKind, channels: usize) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) || channels == 0 {
            return Err(Error::invalid(format!(
                "grid needs positive dims and channels, got {dims:?} with {channels} channels"
            )));
        }
        if let GridKind::LatLon { min, max } = kind {
            if dims.len() != 2 {
                return Err(Error::invalid(format!("lat-lon grids are 2-D, got {dims:?}")));
            }
            if !(max > min && min.is_finite() && max.is_finite()) {
                return Err(Error::invalid(format!("lat-lon feature range [{min}, {max}] is empty")));
            }
        }
        Ok(Self { dims, kind, channels })
    }

    pub fn points(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn coord_dim(&self) -> usize {
        match self.kind {
            GridKind::LatLon { .. } => 3,
            _ => self.dims.len(),
        }
    }
}

/// Normalized position of index `i` on an axis of `n` samples.
pub fn axis_coordinate(i: usize, n: usize) -> f64 {
    if n == 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

/// All grid positions of `dims` in row-major order, as `[Π dims, dims.len()]`.
pub fn grid_coordinates(dims: &[usize]) -> Result<Tensor> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::invalid(format!("grid dims must be positive, got {dims:?}")));
    }
    let n: usize = dims.iter().product();
    let d = dims.len();
    let mut data = Vec::with_capacity(n * d);
    let mut idx = vec![0usize; d];
    for _ in 0..n {
        data.extend(idx.iter().zip(dims).map(|(&i, &size)| axis_coordinate(i, size)));
        for axis in (0..d).rev() {
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
    Ok(Tensor::matrix(n, d, data)?)
}

/// Unit vector `(cos λ cos φ, cos λ sin φ, sin λ)` for latitude `λ` and
/// longitude `φ`.
pub fn latlon_to_sphere(lat: f64, lon: f64) -> Result<[f64; 3]> {
    if !(-FRAC_PI_2..=FRAC_PI_2).contains(&lat) {
        return Err(Error::invalid(format!("latitude {lat} outside [−π/2, π/2]")));
    }
    if !(0.0..TAU).contains(&lon) {
        return Err(Error::invalid(format!("longitude {lon} outside [0, 2π)")));
    }
    let (sl, cl) = lat.sin_cos();
    let (sp, cp) = lon.sin_cos();
    Ok([cl * cp, cl * sp, sl])
}

/// Sphere coordinates of an `h × w` lat-lon grid. Rows run from the south
/// pole to the north pole inclusive; columns sample longitude at `2πj/w`.
pub fn latlon_grid_coordinates(h: usize, w: usize) -> Result<Tensor> {
    if h == 0 || w == 0 {
        return Err(Error::invalid("lat-lon grid dims must be positive"));
    }
    let mut data = Vec::with_capacity(h * w * 3);
    for i in 0..h {
        let lat = if h == 1 { 0.0 } else { -FRAC_PI_2 + PI * i as f64 / (h - 1) as f64 };
        for j in 0..w {
            let lon = TAU * j as f64 / w as f64;
            data.extend_from_slice(&latlon_to_sphere(lat, lon)?);
        }
    }
    Ok(Tensor::matrix(h * w, 3, data)?)
}

/// Converts stored grid values (row-major over `spec.dims`, channels last)
/// into a normalized point cloud.
pub fn grid_to_pointcloud(values: &[f64], spec: &GridSpec) -> Result<PointCloud> {
    let n = spec.points();
    if values.len() != n * spec.channels {
        return Err(Error::dim(format!(
            "grid {:?} with {} channels needs {} values, got {}",
            spec.dims,
            spec.channels,
            n * spec.channels,
            values.len()
        )));
    }
    let coords = match spec.kind {
        GridKind::LatLon { .. } => latlon_grid_coordinates(spec.dims[0], spec.dims[1])?,
        _ => grid_coordinates(&spec.dims)?,
    };
    let features = values.iter().map(|&v| spec.kind.normalize(v)).collect();
    PointCloud::new(coords, Tensor::matrix(n, spec.channels, features)?)
}

/// Maps normalized features back to storage values.
pub fn denormalize_features(features: &Tensor, kind: GridKind) -> Vec<f64> {
    features.data().iter().map(|&f| kind.denormalize(f)).collect()
}
