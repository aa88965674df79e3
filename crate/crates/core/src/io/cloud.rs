//! KITTI `.bin` point clouds and `.beam` ring-index sidecars.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl Point {
    pub const fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Point { x, y, z, intensity }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.points.len() * 16);
        for p in &self.points {
            for v in [p.x, p.y, p.z, p.intensity] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

/// Decodes consecutive little-endian `f32` quadruples `(x, y, z, intensity)`.
pub fn read_point_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::Alignment(bytes.len()));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    bytes
        .chunks_exact(16)
        .enumerate()
        .map(|(i, c)| {
            let p = Point::new(f(&c[0..4]), f(&c[4..8]), f(&c[8..12]), f(&c[12..16]));
            if p.x.is_nan() || p.y.is_nan() || p.z.is_nan() {
                Err(Error::NanCoordinate(i))
            } else {
                Ok(p)
            }
        })
        .collect()
}

pub fn read_point_cloud_file(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    read_point_cloud(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_point_cloud_file(path: &Path, cloud: &PointCloud) -> Result<()> {
    std::fs::write(path, cloud.to_bytes()).map_err(|e| Error::from(e).in_file(path))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntensityMode {
    /// `clamp(intensity / v, 0, 1)`.
    Divisor(f32),
    /// Per-cloud affine map of `[min, max]` onto `[0, 1]`.
    MinMax,
}

impl Default for IntensityMode {
    fn default() -> Self {
        IntensityMode::Divisor(255.0)
    }
}

pub fn normalize_intensity(cloud: &PointCloud, mode: IntensityMode) -> Result<PointCloud> {
    let mut out = cloud.clone();
    match mode {
        IntensityMode::Divisor(v) => {
            if !(v > 0.0) {
                return Err(Error::NonPositive(format!("intensity divisor {v}")));
            }
            for p in &mut out.points {
                p.intensity = (p.intensity / v).clamp(0.0, 1.0);
            }
        }
        IntensityMode::MinMax => {
            let (lo, hi) = out
                .points
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p.intensity), hi.max(p.intensity))
                });
            let range = hi - lo;
            for p in &mut out.points {
                p.intensity = if range > 0.0 && range.is_finite() {
                    ((p.intensity - lo) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
    }
    Ok(out)
}

/// Reads a `.beam` sidecar: one `u16` little-endian ring id per point.
pub fn read_beam_sidecar(bytes: &[u8]) -> Result<Vec<u16>> {
    if !bytes.len().is_multiple_of(2) {
        return Err(Error::Schema(format!(
            "beam sidecar length {} is odd",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}

pub fn beam_sidecar_bytes(ids: &[u16]) -> Vec<u8> {
    ids.iter().flat_map(|id| id.to_le_bytes()).collect()
}
