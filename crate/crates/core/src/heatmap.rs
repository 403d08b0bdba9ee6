//! Object-center density heatmaps: Gaussian splatting, binarization, grid
//! aggregation and the `SCMH` binary file format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::HasBox;

const MAGIC: &[u8; 4] = b"SCMH";
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    /// Image pixels per heatmap cell.
    pub downsample: u32,
    /// Gaussian sigma is `min(w, h) / (divisor * downsample)` cells, at least 1.
    pub gaussian_sigma_divisor: f64,
    /// Binarization threshold as a fraction of the heatmap maximum.
    pub binarize_threshold: f64,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            downsample: 4,
            gaussian_sigma_divisor: 6.0,
            binarize_threshold: 0.2,
        }
    }
}

impl HeatmapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.downsample < 1 {
            return Err(Error::config("heatmap downsample must be >= 1"));
        }
        if !(self.gaussian_sigma_divisor > 0.0 && self.gaussian_sigma_divisor.is_finite()) {
            return Err(Error::config("gaussian_sigma_divisor must be > 0"));
        }
        check_tau(self.binarize_threshold)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("binarize threshold {tau} outside (0, 1)")))
    }
}

/// Non-negative density field, row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    downsample: u32,
    values: Vec<f32>,
}

impl Heatmap {
    pub fn zeros(width: usize, height: usize, downsample: u32) -> Result<Self> {
        Self::from_values(width, height, downsample, vec![0.0; width * height])
    }

    pub fn from_values(
        width: usize,
        height: usize,
        downsample: u32,
        values: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input("heatmap dimensions must be positive"));
        }
        if downsample == 0 {
            return Err(Error::input("heatmap downsample must be >= 1"));
        }
        if values.len() != width * height {
            return Err(Error::input(format!(
                "heatmap {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::input(format!(
                "heatmap value {} at index {pos} is negative or non-finite",
                values[pos]
            )));
        }
        Ok(Self {
            width,
            height,
            downsample,
            values,
        })
    }

    /// Heatmap dimensions for an image: `ceil(image / downsample)` per axis.
    pub fn dims_for_image(image_w: u32, image_h: u32, downsample: u32) -> (usize, usize) {
        (
            image_w.div_ceil(downsample) as usize,
            image_h.div_ceil(downsample) as usize,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn downsample(&self) -> u32 {
        self.downsample
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    /// Copy with every cell outside `mask` set to zero.
    pub fn masked(&self, mask: &LocationMask) -> Result<Heatmap> {
        if mask.width != self.width || mask.height != self.height {
            return Err(Error::input("mask and heatmap dimensions differ"));
        }
        let values = self
            .values
            .iter()
            .zip(&mask.bits)
            .map(|(&v, &on)| if on { v } else { 0.0 })
            .collect();
        Ok(Heatmap {
            values,
            ..self.clone()
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&self.downsample.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |offset: usize, message: String| Error::Format { offset, message };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(fmt(0, "missing SCMH magic".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(fmt(bytes.len(), "truncated header".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let (width, height, downsample) = (word(4), word(8), word(12));
        if width == 0 || height == 0 {
            return Err(fmt(4, format!("zero dimension {width}x{height}")));
        }
        if downsample == 0 {
            return Err(fmt(12, "downsample must be >= 1".into()));
        }
        let cells = width as usize * height as usize;
        let expected = HEADER_LEN + 4 * cells;
        if bytes.len() < expected {
            return Err(fmt(
                bytes.len(),
                format!("truncated payload: expected {expected} bytes"),
            ));
        }
        if bytes.len() > expected {
            return Err(fmt(expected, "trailing bytes after payload".into()));
        }
        let mut values = Vec::with_capacity(cells);
        for (k, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() || v < 0.0 {
                return Err(fmt(
                    HEADER_LEN + 4 * k,
                    format!("value {v} is negative or non-finite"),
                ));
            }
            values.push(v);
        }
        Ok(Heatmap {
            width: width as usize,
            height: height as usize,
            downsample,
            values,
        })
    }
}

pub fn save_heatmap(h: &Heatmap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, h.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_heatmap(path: impl AsRef<Path>) -> Result<Heatmap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Heatmap::from_bytes(&bytes)
}

/// Binary salient-cell mask with the dimensions of its source heatmap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocationMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl LocationMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Writes one CenterNet-style Gaussian per object, composing overlaps by
/// per-cell maximum. Peaks are exactly 1.0 at the cell containing each box
/// center.
pub fn splat<T: HasBox>(
    objects: &[T],
    image_w: u32,
    image_h: u32,
    cfg: &HeatmapConfig,
) -> Result<Heatmap> {
    cfg.validate()?;
    if image_w == 0 || image_h == 0 {
        return Err(Error::input("image dimensions must be positive"));
    }
    let r = cfg.downsample as f64;
    let (width, height) = Heatmap::dims_for_image(image_w, image_h, cfg.downsample);
    let mut values = vec![0.0f32; width * height];

    for (n, obj) in objects.iter().enumerate() {
        let b = obj.bbox();
        if b.x() < 0.0 || b.y() < 0.0 || b.right() > image_w as f64 || b.bottom() > image_h as f64
        {
            return Err(Error::input(format!(
                "object {n} box {:?} lies outside the {image_w}x{image_h} image",
                b.to_array()
            )));
        }
        let (cx, cy) = b.center();
        let ci = ((cx / r).floor() as usize).min(width - 1);
        let cj = ((cy / r).floor() as usize).min(height - 1);
        let sigma = (b.w().min(b.h()) / (cfg.gaussian_sigma_divisor * r)).max(1.0);
        let reach = 3.0 * sigma;
        let radius = reach.floor() as usize;
        let two_var = 2.0 * sigma * sigma;

        for j in cj.saturating_sub(radius)..=(cj + radius).min(height - 1) {
            let dy = j as f64 - cj as f64;
            for i in ci.saturating_sub(radius)..=(ci + radius).min(width - 1) {
                let dx = i as f64 - ci as f64;
                let d2 = dx * dx + dy * dy;
                if d2 > reach * reach {
                    continue;
                }
                let v = (-d2 / two_var).exp() as f32;
                let cell = &mut values[j * width + i];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }

    Heatmap::from_values(width, height, cfg.downsample, values)
}

/// Sets a bit iff the cell value exceeds `tau * max(h)`.
pub fn binarize(h: &Heatmap, tau: f64) -> Result<LocationMask> {
    check_tau(tau)?;
    let cut = tau * h.max() as f64;
    Ok(LocationMask {
        width: h.width,
        height: h.height,
        bits: h.values.iter().map(|&v| v as f64 > cut).collect(),
    })
}

/// Per-grid-cell summed heatmap mass, `grid_y` rows of `grid_x` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    grid_x: usize,
    grid_y: usize,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn from_values(grid_x: usize, grid_y: usize, values: Vec<f64>) -> Result<Self> {
        if grid_x == 0 || grid_y == 0 || values.len() != grid_x * grid_y {
            return Err(Error::input(format!(
                "density grid {grid_x}x{grid_y} with {} values",
                values.len()
            )));
        }
        Ok(Self {
            grid_x,
            grid_y,
            values,
        })
    }

    pub fn grid_x(&self) -> usize {
        self.grid_x
    }

    pub fn grid_y(&self) -> usize {
        self.grid_y
    }

    /// Density of column `i`, row `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid_x + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Half-open span `[floor(k·len/parts), floor((k+1)·len/parts))` of grid
/// index `k` along an axis of `len` heatmap cells.
pub fn grid_window(k: usize, len: usize, parts: usize) -> (usize, usize) {
    (k * len / parts, (k + 1) * len / parts)
}

pub fn grid_densities(h: &Heatmap, grid_x: usize, grid_y: usize) -> Result<DensityGrid> {
    if grid_x == 0 || grid_y == 0 {
        return Err(Error::input("grid dimensions must be positive"));
    }
    if grid_x > h.width || grid_y > h.height {
        return Err(Error::input(format!(
            "grid {grid_x}x{grid_y} is larger than the {}x{} heatmap",
            h.width, h.height
        )));
    }
    // column -> grid column lookup so each row is a single pass
    let mut col_owner = vec![0usize; h.width];
    for i in 0..grid_x {
        let (c0, c1) = grid_window(i, h.width, grid_x);
        col_owner[c0..c1].fill(i);
    }
    let mut values = vec![0.0f64; grid_x * grid_y];
    for j in 0..grid_y {
        let (r0, r1) = grid_window(j, h.height, grid_y);
        let out = &mut values[j * grid_x..(j + 1) * grid_x];
        for row in r0..r1 {
            let line = &h.values[row * h.width..(row + 1) * h.width];
            for (c, &v) in line.iter().enumerate() {
                out[col_owner[c]] += v as f64;
            }
        }
    }
    DensityGrid::from_values(grid_x, grid_y, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn splat_empty_is_zero() {
        let h = splat::<BoundingBox>(&[], 100, 60, &HeatmapConfig::default()).unwrap();
        assert_eq!((h.width(), h.height()), (25, 15));
        assert!(h.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn splat_dims_round_up() {
        let h = splat::<BoundingBox>(&[], 101, 61, &HeatmapConfig::default()).unwrap();
        assert_eq!((h.width(), h.height()), (26, 16));
    }

    #[test]
    fn splat_peak_at_center_cell() {
        let h = splat(&[bb(30.0, 30.0, 20.0, 20.0)], 200, 200, &HeatmapConfig::default()).unwrap();
        assert_eq!(h.get(10, 10), 1.0);
        assert_eq!(h.max(), 1.0);
        // sigma = max(1, 20 / 24) = 1 cell
        assert_eq!(h.get(11, 10), (-0.5f64).exp() as f32);
    }

    #[test]
    fn splat_two_far_objects() {
        // centers 100 cells apart along x; sigma = 1 so nothing reaches the midpoint
        let objs = [bb(36.0, 36.0, 8.0, 8.0), bb(436.0, 36.0, 8.0, 8.0)];
        let h = splat(&objs, 800, 100, &HeatmapConfig::default()).unwrap();
        assert_eq!(h.get(10, 10), 1.0);
        assert_eq!(h.get(110, 10), 1.0);
        let sigma = 1.0f64;
        let midpoint_formula = (-(50.0f64 * 50.0) / (2.0 * sigma * sigma)).exp();
        assert!(midpoint_formula < 1e-300);
        assert_eq!(h.get(60, 10), 0.0);
        assert!((14..=106).all(|i| h.get(i, 10) == 0.0));
        assert_eq!(h.values().iter().filter(|&&v| v == 1.0).count(), 2);
    }

    #[test]
    fn splat_overlap_uses_max() {
        let objs = [bb(30.0, 30.0, 20.0, 20.0), bb(34.0, 30.0, 20.0, 20.0)];
        let h = splat(&objs, 200, 200, &HeatmapConfig::default()).unwrap();
        assert_eq!(h.get(10, 10), 1.0);
        assert_eq!(h.get(11, 10), 1.0);
        assert!(h.max() <= 1.0);
    }

    #[test]
    fn splat_rejects_outside_object() {
        let err = splat(&[bb(95.0, 0.0, 10.0, 10.0)], 100, 100, &HeatmapConfig::default());
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn binarize_examples() {
        let zero = Heatmap::zeros(4, 3, 4).unwrap();
        assert_eq!(binarize(&zero, 0.2).unwrap().count(), 0);

        let mut v = vec![0.0; 6];
        v[4] = 1.0;
        let single = Heatmap::from_values(3, 2, 4, v).unwrap();
        let m = binarize(&single, 0.2).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(1, 1));

        let three = Heatmap::from_values(3, 1, 4, vec![0.1, 0.5, 1.0]).unwrap();
        let m = binarize(&three, 0.2).unwrap();
        assert_eq!(m.bits(), &[false, true, true]);

        assert!(binarize(&three, 0.0).is_err());
        assert!(binarize(&three, 1.0).is_err());
    }

    #[test]
    fn grid_uniform_and_zero() {
        let h = Heatmap::from_values(32, 20, 4, vec![0.25; 640]).unwrap();
        let d = grid_densities(&h, 16, 10).unwrap();
        assert!(d.values().iter().all(|&v| v == 1.0));

        let z = Heatmap::zeros(32, 20, 4).unwrap();
        assert_eq!(grid_densities(&z, 16, 10).unwrap().total(), 0.0);
    }

    #[test]
    fn grid_larger_than_heatmap_is_error() {
        let h = Heatmap::zeros(8, 20, 4).unwrap();
        assert!(grid_densities(&h, 16, 10).is_err());
    }

    #[test]
    fn grid_windows_partition() {
        for len in 1..60 {
            for parts in 1..=len {
                let mut next = 0;
                for k in 0..parts {
                    let (a, b) = grid_window(k, len, parts);
                    assert_eq!(a, next);
                    assert!(b > a);
                    next = b;
                }
                assert_eq!(next, len);
            }
        }
    }

    #[test]
    fn masked_zeroes_background() {
        let h = Heatmap::from_values(3, 1, 1, vec![0.1, 0.5, 1.0]).unwrap();
        let m = binarize(&h, 0.2).unwrap();
        assert_eq!(h.masked(&m).unwrap().values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn bytes_round_trip_and_rejections() {
        let h = Heatmap::from_values(1, 1, 4, vec![0.5]).unwrap();
        let bytes = h.to_bytes();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[..4], b"SCMH");
        assert_eq!(Heatmap::from_bytes(&bytes).unwrap(), h);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Heatmap::from_bytes(&bad),
            Err(Error::Format { offset: 0, .. })
        ));

        assert!(matches!(
            Heatmap::from_bytes(&bytes[..18]),
            Err(Error::Format { offset: 18, .. })
        ));

        let mut nan = bytes.clone();
        nan[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            Heatmap::from_bytes(&nan),
            Err(Error::Format { offset: 16, .. })
        ));
    }
}
