//! File formats: binary PPM/PGM images, point-cloud CSV, voxel occupancy
//! text, lat-lon CSV grids and their `key=value` metadata sidecar.
//!
//! Every reader has an in-memory counterpart (`parse_*`) and every writer
//! an `encode_*`, so round trips can be checked without touching disk.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{grid_to_pointcloud, GridKind, GridSpec, PointCloud};
use crate::error::{Error, Result};

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// An 8-bit raster with interleaved channels (1 = gray, 3 = RGB).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u8,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || !matches!(channels, 1 | 3) {
            return Err(Error::invalid(format!(
                "image must be non-empty with 1 or 3 channels, got {width}x{height}x{channels}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::dim(format!(
                "{width}x{height}x{channels} image needs {} bytes, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            maxval: 255,
            pixels,
        })
    }

    /// Point cloud over the `[H, W]` pixel grid with features in `[−1, 1]`.
    pub fn to_pointcloud(&self) -> Result<PointCloud> {
        let spec = GridSpec::new(vec![self.height, self.width], GridKind::Image, self.channels)?;
        let scale = 255.0 / f64::from(self.maxval.max(1));
        let values: Vec<f64> = self.pixels.iter().map(|&p| f64::from(p) * scale).collect();
        grid_to_pointcloud(&values, &spec)
    }

    /// Quantizes `[−1, 1]` features (row-major over `[H, W]`) to 8 bits.
    pub fn from_features(width: usize, height: usize, channels: usize, features: &[f64]) -> Result<Self> {
        let pixels = features
            .iter()
            .map(|&f| GridKind::Image.denormalize(f).round().clamp(0.0, 255.0) as u8)
            .collect();
        Self::new(width, height, channels, pixels)
    }
}

struct HeaderScanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderScanner<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(format!("byte {}", self.pos), message)
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::parse(format!("byte {start}"), format!("{what} out of range")))
    }
}

/// Parses a binary PPM (`P6`) or PGM (`P5`) image with maxval ≤ 255.
pub fn parse_pnm(bytes: &[u8]) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(Error::parse("byte 0", "expected magic `P6` or `P5`")),
    };
    let mut scan = HeaderScanner { bytes, pos: 2 };
    if !scan.bytes.get(2).is_some_and(u8::is_ascii_whitespace) {
        return Err(scan.error("expected whitespace after magic"));
    }
    let width = scan.number("width")?;
    let height = scan.number("height")?;
    let maxval = scan.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(scan.error("image dimensions must be positive"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(scan.error(format!("maxval {maxval} is not in 1..=255")));
    }
    if !scan.bytes.get(scan.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(scan.error("expected a single whitespace byte before pixel data"));
    }
    let start = scan.pos + 1;
    let expected = width * height * channels;
    let pixels = &bytes[start..];
    if pixels.len() != expected {
        return Err(Error::parse(
            format!("byte {start}"),
            format!("expected {expected} pixel bytes, found {}", pixels.len()),
        ));
    }
    let mut image = Image::new(width, height, channels, pixels.to_vec())?;
    image.maxval = maxval as u8;
    Ok(image)
}

/// Serializes with a canonical `P6\nW H\nMAX\n` (or `P5`) header.
pub fn encode_pnm(image: &Image) -> Vec<u8> {
    let magic = if image.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n{}\n", image.width, image.height, image.maxval).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

fn read_pnm_expecting(path: &Path, channels: usize) -> Result<Image> {
    let image = parse_pnm(&read_bytes(path)?)?;
    if image.channels != channels {
        let want = if channels == 3 { "P6" } else { "P5" };
        return Err(Error::parse("byte 0", format!("{} is not a {want} file", path.display())));
    }
    Ok(image)
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    read_pnm_expecting(path, 3)
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    read_pnm_expecting(path, 1)
}

/// Reads either binary format, choosing by magic bytes.
pub fn read_pnm(path: &Path) -> Result<Image> {
    parse_pnm(&read_bytes(path)?)
}

pub fn write_ppm(path: &Path, image: &Image) -> Result<()> {
    if image.channels != 3 {
        return Err(Error::invalid("PPM output needs a 3-channel image"));
    }
    write_file(path, &encode_pnm(image))
}

pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    if image.channels != 1 {
        return Err(Error::invalid("PGM output needs a 1-channel image"));
    }
    write_file(path, &encode_pnm(image))
}

/// Parses CSV with header `x0,…,x{d−1},y0,…,y{k−1}`.
pub fn parse_csv_pointcloud(text: &str) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse("line 1", e.to_string()))?
        .clone();
    let d = header.iter().take_while(|h| h.starts_with('x')).count();
    let k = header.len() - d;
    for (i, name) in header.iter().enumerate() {
        let expected = if i < d { format!("x{i}") } else { format!("y{}", i - d) };
        if name != expected {
            return Err(Error::parse("line 1", format!("column {i} is `{name}`, expected `{expected}`")));
        }
    }
    if d == 0 || k == 0 {
        return Err(Error::parse("line 1", "header needs at least one x and one y column"));
    }
    let mut coords = Vec::new();
    let mut features = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (i, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(format!("line {line}"), format!("`{field}` is not a number")))?;
            if i < d {
                coords.push(v);
            } else {
                features.push(v);
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::parse("line 2", "point cloud has no rows"));
    }
    PointCloud::from_rows(d, k, coords, features)
}

pub fn encode_csv_pointcloud(pc: &PointCloud) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (0..pc.coord_dim())
        .map(|i| format!("x{i}"))
        .chain((0..pc.feature_dim()).map(|i| format!("y{i}")))
        .collect();
    let csv_err = |e: csv::Error| Error::invalid(format!("csv encoding failed: {e}"));
    writer.write_record(&header).map_err(csv_err)?;
    for i in 0..pc.len() {
        let row: Vec<String> = pc
            .coord_row(i)
            .iter()
            .chain(pc.feature_row(i))
            .map(|v| v.to_string())
            .collect();
        writer.write_record(&row).map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn read_csv_pointcloud(path: &Path) -> Result<PointCloud> {
    parse_csv_pointcloud(&read_text(path)?)
}

pub fn write_csv_pointcloud(path: &Path, pc: &PointCloud) -> Result<()> {
    write_file(path, encode_csv_pointcloud(pc)?.as_bytes())
}

/// A `D × H × W` occupancy grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub occupancy: Vec<u8>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], occupancy: Vec<u8>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!("voxel dims must be positive, got {dims:?}")));
        }
        if occupancy.len() != dims.iter().product::<usize>() {
            return Err(Error::dim(format!(
                "voxel grid {dims:?} needs {} cells, got {}",
                dims.iter().product::<usize>(),
                occupancy.len()
            )));
        }
        if let Some(bad) = occupancy.iter().find(|&&v| v > 1) {
            return Err(Error::invalid(format!("occupancy value {bad} is not 0 or 1")));
        }
        Ok(Self { dims, occupancy })
    }

    pub fn to_pointcloud(&self) -> Result<PointCloud> {
        let spec = GridSpec::new(self.dims.to_vec(), GridKind::Voxel, 1)?;
        let values: Vec<f64> = self.occupancy.iter().map(|&v| f64::from(v)).collect();
        grid_to_pointcloud(&values, &spec)
    }

    /// Occupied wherever the feature, read back on the `[0, 1]` occupancy
    /// scale, is at least `threshold`.
    pub fn from_features(dims: [usize; 3], features: &[f64], threshold: f64) -> Result<Self> {
        let occupancy = features
            .iter()
            .map(|&f| u8::from(GridKind::Voxel.denormalize(f) >= threshold))
            .collect();
        Self::new(dims, occupancy)
    }
}

/// Parses `"D H W"` followed by `D·H·W` whitespace-separated 0/1 values.
pub fn parse_voxel_text(text: &str) -> Result<VoxelGrid> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::parse("line 1", "missing `D H W` header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse("line 1", format!("header `{header}` is not three integers")))?;
    let dims: [usize; 3] = dims
        .try_into()
        .map_err(|_| Error::parse("line 1", format!("header `{header}` is not three integers")))?;
    let mut occupancy = Vec::new();
    for (i, line) in lines {
        for token in line.split_whitespace() {
            let v = match token {
                "0" => 0,
                "1" => 1,
                _ => {
                    return Err(Error::parse(
                        format!("line {}", i + 1),
                        format!("`{token}` is not 0 or 1"),
                    ))
                }
            };
            occupancy.push(v);
        }
    }
    let expected: usize = dims.iter().product();
    if occupancy.len() != expected {
        return Err(Error::parse(
            format!("line {}", text.lines().count()),
            format!("expected {expected} occupancy values, found {}", occupancy.len()),
        ));
    }
    VoxelGrid::new(dims, occupancy)
}

/// One line per `(d, h)` row of `W` values.
pub fn encode_voxel_text(grid: &VoxelGrid) -> String {
    let [d, h, w] = grid.dims;
    let mut out = format!("{d} {h} {w}\n");
    for row in grid.occupancy.chunks(w) {
        let line: Vec<&str> = row.iter().map(|&v| if v == 1 { "1" } else { "0" }).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_voxel_text(path: &Path) -> Result<VoxelGrid> {
    parse_voxel_text(&read_text(path)?)
}

pub fn write_voxel_text(path: &Path, grid: &VoxelGrid) -> Result<()> {
    write_file(path, encode_voxel_text(grid).as_bytes())
}

/// Normalization range and data kind from a `key=value` sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub feature_min: f64,
    pub feature_max: f64,
    pub kind: String,
}

pub fn parse_metadata(text: &str) -> Result<Metadata> {
    let (mut min, mut max, mut kind) = (None, None, None);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let location = format!("line {}", i + 1);
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&location, format!("`{line}` is not key=value")))?;
        let (key, value) = (key.trim(), value.trim());
        let number = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::parse(&location, format!("`{value}` is not a number")))
        };
        match key {
            "feature_min" => min = Some(number()?),
            "feature_max" => max = Some(number()?),
            "kind" => kind = Some(value.to_string()),
            _ => return Err(Error::parse(&location, format!("unknown key `{key}`"))),
        }
    }
    let missing = |k: &str| Error::parse("end of file", format!("missing `{k}`"));
    Ok(Metadata {
        feature_min: min.ok_or_else(|| missing("feature_min"))?,
        feature_max: max.ok_or_else(|| missing("feature_max"))?,
        kind: kind.ok_or_else(|| missing("kind"))?,
    })
}

pub fn encode_metadata(meta: &Metadata) -> String {
    format!(
        "feature_min={}\nfeature_max={}\nkind={}\n",
        meta.feature_min, meta.feature_max, meta.kind
    )
}

pub fn read_metadata(path: &Path) -> Result<Metadata> {
    parse_metadata(&read_text(path)?)
}

pub fn write_metadata(path: &Path, meta: &Metadata) -> Result<()> {
    write_file(path, encode_metadata(meta).as_bytes())
}

/// A lat-lon grid: `h` comma-separated lines of `w` values, south to north.
#[derive(Debug, Clone, PartialEq)]
pub struct LatLonGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl LatLonGrid {
    pub fn to_pointcloud(&self, meta: &Metadata) -> Result<PointCloud> {
        let kind = GridKind::LatLon {
            min: meta.feature_min,
            max: meta.feature_max,
        };
        let spec = GridSpec::new(vec![self.height, self.width], kind, 1)?;
        grid_to_pointcloud(&self.values, &spec)
    }
}

pub fn parse_latlon_csv(text: &str) -> Result<LatLonGrid> {
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("line {}", i + 1);
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(&location, format!("`{}` is not a number", f.trim())))
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(location, format!("row has {} values, expected {w}", row.len())))
            }
            Some(_) => {}
        }
        values.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| Error::parse("line 1", "grid is empty"))?;
    Ok(LatLonGrid { height, width, values })
}

pub fn encode_latlon_csv(grid: &LatLonGrid) -> String {
    let mut out = String::new();
    for row in grid.values.chunks(grid.width) {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

pub fn read_latlon_csv(path: &Path) -> Result<LatLonGrid> {
    parse_latlon_csv(&read_text(path)?)
}

/// Loads any supported single-datapoint file by extension: `.ppm`, `.pgm`,
/// `.csv` (point cloud) or `.vox`/`.txt` (voxel text).
pub fn load_pointcloud(path: &Path) -> Result<PointCloud> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "ppm" | "pgm" | "pnm" => read_pnm(path)?.to_pointcloud(),
        "csv" => read_csv_pointcloud(path),
        "vox" | "txt" => read_voxel_text(path)?.to_pointcloud(),
        _ => Err(Error::invalid(format!(
            "{}: unrecognized extension (expected ppm, pgm, csv, vox or txt)",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm_round_trip_is_byte_identical() {
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 10, 20, 255, 128, 7]);
        let image = parse_pnm(&bytes).unwrap();
        assert_eq!((image.width, image.height, image.channels), (2, 1, 3));
        assert_eq!(encode_pnm(&image), bytes);
    }

    #[test]
    fn pnm_header_comments_and_errors() {
        let mut bytes = b"P5 # gray\n# size next\n1 2\n255\n".to_vec();
        bytes.extend_from_slice(&[3, 4]);
        assert_eq!(parse_pnm(&bytes).unwrap().pixels, vec![3, 4]);

        let err = parse_pnm(b"P4\n1 1\n255\n\0").unwrap_err();
        assert!(matches!(err, Error::Parse { ref location, .. } if location == "byte 0"));
        assert!(matches!(parse_pnm(b"P5\n1 1\n255\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_pnm(b"P5\n1 x\n255\n\0"), Err(Error::Parse { .. })));
        assert!(matches!(parse_pnm(b"P5\n1 1\n65535\n\0\0"), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_header_determines_dims() {
        let pc = parse_csv_pointcloud("x0,x1,y0\n0.5,-0.5,1\n1,1,0.25\n").unwrap();
        assert_eq!((pc.len(), pc.coord_dim(), pc.feature_dim()), (2, 2, 1));
        assert_eq!(pc.feature_row(1), &[0.25]);
        assert!(parse_csv_pointcloud("x0,y1\n0,0\n").is_err());
        assert!(parse_csv_pointcloud("x0,y0\n0,zz\n").is_err());
        assert!(parse_csv_pointcloud("x0,y0\n").is_err());
    }

    #[test]
    fn voxel_example() {
        let grid = parse_voxel_text("1 1 2\n0 1").unwrap();
        let pc = grid.to_pointcloud().unwrap();
        assert_eq!(pc.len(), 2);
        assert_eq!(pc.features().data(), &[-1.0, 1.0]);
        assert_eq!(parse_voxel_text(&encode_voxel_text(&grid)).unwrap(), grid);
        assert!(parse_voxel_text("1 1 2\n0 2").is_err());
        assert!(parse_voxel_text("1 1\n0").is_err());
        assert!(parse_voxel_text("1 1 3\n0 1").is_err());
    }

    #[test]
    fn metadata_round_trip_and_unknown_keys() {
        let meta = Metadata {
            feature_min: 180.5,
            feature_max: 320.0,
            kind: "latlon".into(),
        };
        assert_eq!(parse_metadata(&encode_metadata(&meta)).unwrap(), meta);
        assert!(parse_metadata("feature_min=1\nfeature_max=2\nkind=x\nother=3").is_err());
        assert!(parse_metadata("feature_min=1\nkind=x").is_err());
    }

    #[test]
    fn latlon_csv_round_trip() {
        let grid = parse_latlon_csv("1.5,2\n3,-4.25\n5,6\n").unwrap();
        assert_eq!((grid.height, grid.width), (3, 2));
        assert_eq!(parse_latlon_csv(&encode_latlon_csv(&grid)).unwrap(), grid);
        assert!(parse_latlon_csv("1,2\n3\n").is_err());
    }
}
