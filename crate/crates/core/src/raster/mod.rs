//! Grayscale rasters, binary maps, integer boxes and the pixel operations
//! shared by every other stage.
//!
//! Luminance follows the paper-document convention: `0` is black ink and
//! `255` is white paper.

mod components;
pub(crate) mod filter;
pub mod io;
mod morph;

pub use components::{connected_components, Component, Connectivity};
pub use filter::{gaussian_blur, resample, rotate, rotate_point, stretch_range, MAX_ROTATION_DEGREES};
pub use morph::dilate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("raster dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("buffer length {len} does not match {width}x{height}")]
    BufferLength { width: usize, height: usize, len: usize },
    #[error("binary map values must be 0 or 1, found {value} at index {index}")]
    NotBinary { index: usize, value: u8 },
    #[error("empty box ({x0},{y0})-({x1},{y1})")]
    EmptyBox { x0: i32, y0: i32, x1: i32, y1: i32 },
    #[error("rotation of {0} degrees exceeds the small-rotation limit")]
    RotationTooLarge(f64),
    #[error("stretch range requires lo < hi, got lo={lo} hi={hi}")]
    InvalidRange { lo: u8, hi: u8 },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Half-open integer pixel box: `x0..x1` by `y0..y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i32; 4]", into = "[i32; 4]")]
pub struct Rect {
    x0: i32,
    y0: i32,
    x1: i32,
    y1: i32,
}

impl Rect {
    pub fn new(x0: i32, y0: i32, x1: i32, y1: i32) -> Result<Self, RasterError> {
        if x1 <= x0 || y1 <= y0 {
            return Err(RasterError::EmptyBox { x0, y0, x1, y1 });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Box from a top-left corner and a positive extent.
    pub fn from_xywh(x: i32, y: i32, w: i32, h: i32) -> Result<Self, RasterError> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn x0(&self) -> i32 {
        self.x0
    }
    pub fn y0(&self) -> i32 {
        self.y0
    }
    pub fn x1(&self) -> i32 {
        self.x1
    }
    pub fn y1(&self) -> i32 {
        self.y1
    }
    pub fn width(&self) -> i32 {
        self.x1 - self.x0
    }
    pub fn height(&self) -> i32 {
        self.y1 - self.y0
    }
    pub fn area(&self) -> i64 {
        self.width() as i64 * self.height() as i64
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        Rect::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        )
        .ok()
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn contains(&self, other: &Rect) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    pub fn contains_point(&self, x: i32, y: i32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Clips to `0..width` by `0..height`; `None` when nothing is left.
    pub fn clip(&self, width: usize, height: usize) -> Option<Rect> {
        Rect::new(
            self.x0.max(0),
            self.y0.max(0),
            self.x1.min(width as i32),
            self.y1.min(height as i32),
        )
        .ok()
    }

    pub fn translate(&self, dx: i32, dy: i32) -> Rect {
        Rect {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    /// Tight bound of a non-empty set of boxes.
    pub fn bounding<'a>(boxes: impl IntoIterator<Item = &'a Rect>) -> Option<Rect> {
        boxes.into_iter().copied().reduce(|a, b| a.union(&b))
    }

    pub fn to_array(self) -> [i32; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

impl TryFrom<[i32; 4]> for Rect {
    type Error = RasterError;
    fn try_from(v: [i32; 4]) -> Result<Self, Self::Error> {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Rect> for [i32; 4] {
    fn from(r: Rect) -> Self {
        r.to_array()
    }
}

/// Intersection over union of two boxes, computed on exact integer areas.
pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let inter = a.intersection(b).map_or(0, |r| r.area());
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        assert!(width >= 1 && height >= 1, "raster must be at least 1x1");
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        check_dims(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn min_max(&self) -> (u8, u8) {
        self.data
            .iter()
            .fold((u8::MAX, u8::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Copy of the region `r` (clipped to the image).
    pub fn crop(&self, r: &Rect) -> Option<Raster> {
        let r = r.clip(self.width, self.height)?;
        let (w, h) = (r.width() as usize, r.height() as usize);
        let mut out = Vec::with_capacity(w * h);
        for y in r.y0() as usize..r.y1() as usize {
            let start = y * self.width + r.x0() as usize;
            out.extend_from_slice(&self.data[start..start + w]);
        }
        Some(Raster {
            width: w,
            height: h,
            data: out,
        })
    }

    /// Writes `src` with its top-left corner at `(x, y)`, darkest pixel wins.
    pub fn blit_min(&mut self, src: &Raster, x: i32, y: i32) {
        for sy in 0..src.height {
            let ty = y + sy as i32;
            if ty < 0 || ty >= self.height as i32 {
                continue;
            }
            for sx in 0..src.width {
                let tx = x + sx as i32;
                if tx < 0 || tx >= self.width as i32 {
                    continue;
                }
                let idx = ty as usize * self.width + tx as usize;
                self.data[idx] = self.data[idx].min(src.get(sx, sy));
            }
        }
    }

    /// Pixels below `threshold` become 1 (ink).
    pub fn binarize_ink(&self, threshold: u8) -> BinaryMap {
        BinaryMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| u8::from(v < threshold)).collect(),
        }
    }
}

/// Row-major {0,1} map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "map must be at least 1x1");
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        let mut m = Self::zeros(width, height);
        m.data.fill(1);
        m
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        check_dims(width, height, data.len())?;
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(RasterError::NotBinary { index, value });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = u8::from(v);
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Sets every pixel of `r` (clipped) to 1.
    pub fn fill_rect(&mut self, r: &Rect) {
        if let Some(r) = r.clip(self.width, self.height) {
            for y in r.y0() as usize..r.y1() as usize {
                let row = y * self.width;
                self.data[row + r.x0() as usize..row + r.x1() as usize].fill(1);
            }
        }
    }

    /// {0,255} raster view, 255 where the map is set.
    pub fn to_raster(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v * 255).collect(),
        }
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::EmptyDimensions { width, height });
    }
    if width * height != len {
        return Err(RasterError::BufferLength { width, height, len });
    }
    Ok(())
}

/// Grayscale conversion applied to color inputs on load.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}
