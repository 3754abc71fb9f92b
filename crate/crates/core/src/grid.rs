//! Dense value types shared by every stage of the pipeline.
//!
//! All grids are row-major. A cell is addressed as `(x, y)` where `x` is the
//! column and `y` the row, so the squared distance of cell `(i, j)` from a
//! keypoint `(kx, ky)` is `(i - kx)^2 + (j - ky)^2`.
//!
//! Storage is `f64`. Binary dumps narrow to `f32` (see [`crate::io`]).

use std::fmt;

use crate::error::{Error, Result};

/// Dimensions of a [`HeatmapStack`]: `channels x height x width`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape { channels, height, width }
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of channel `k`, column `x`, row `y`.
    #[inline]
    pub const fn index(&self, k: usize, x: usize, y: usize) -> usize {
        (k * self.height + y) * self.width + x
    }

    pub(crate) fn ensure_eq(&self, other: &Shape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::dimension(self, other))
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A single `height x width` plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Grid2D {
    pub fn zeros(height: usize, width: usize) -> Self {
        Grid2D {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::dimension(height * width, data.len()));
        }
        Ok(Grid2D { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// `(min, max)` of the plane, or `None` when empty.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        min_max(&self.data)
    }
}

/// `K` planes of identical size: ground-truth heatmaps, predictions, and the
/// per-pixel fields derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapStack {
    shape: Shape,
    data: Vec<f64>,
}

impl HeatmapStack {
    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        HeatmapStack {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::dimension(shape.len(), data.len()));
        }
        Ok(HeatmapStack { shape, data })
    }

    /// Stacks equally sized planes into channels.
    pub fn from_grids(grids: Vec<Grid2D>) -> Result<Self> {
        let (height, width) = grids.first().map(|g| (g.height, g.width)).unwrap_or((0, 0));
        let shape = Shape::new(grids.len(), height, width);
        let mut data = Vec::with_capacity(shape.len());
        for g in grids {
            if (g.height, g.width) != (height, width) {
                return Err(Error::dimension(format!("{height}x{width}"), format!("{}x{}", g.height, g.width)));
            }
            data.extend(g.data);
        }
        Ok(HeatmapStack { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, k: usize, x: usize, y: usize) -> f64 {
        self.data[self.shape.index(k, x, y)]
    }

    #[inline]
    pub fn set(&mut self, k: usize, x: usize, y: usize, value: f64) {
        let i = self.shape.index(k, x, y);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let plane = self.shape.plane();
        &self.data[k * plane..(k + 1) * plane]
    }

    pub fn channel_grid(&self, k: usize) -> Grid2D {
        Grid2D {
            height: self.shape.height,
            width: self.shape.width,
            data: self.channel(k).to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> HeatmapStack {
        HeatmapStack {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two stacks of the same shape.
    pub fn zip_map(&self, other: &HeatmapStack, f: impl Fn(f64, f64) -> f64) -> Result<HeatmapStack> {
        self.shape.ensure_eq(&other.shape)?;
        Ok(HeatmapStack {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Sequential left-to-right sum in `f64`.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        min_max(&self.data)
    }

    /// Per-pixel mean over channels.
    pub fn channel_mean(&self) -> Grid2D {
        let Shape { channels, height, width } = self.shape;
        let mut out = Grid2D::zeros(height, width);
        if channels == 0 {
            return out;
        }
        for k in 0..channels {
            for (o, &v) in out.data.iter_mut().zip(self.channel(k)) {
                *o += v;
            }
        }
        for o in &mut out.data {
            *o /= channels as f64;
        }
        out
    }
}

fn min_max(values: &[f64]) -> Option<(f64, f64)> {
    let first = *values.first()?;
    Some(values.iter().fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))))
}

/// Pixel-wise maximum of two stacks.
pub fn elementwise_max(a: &HeatmapStack, b: &HeatmapStack) -> Result<HeatmapStack> {
    a.zip_map(b, f64::max)
}

/// Per-pixel scale factors `s`; strictly positive and finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleField(HeatmapStack);

impl ScaleField {
    pub fn new(stack: HeatmapStack) -> Result<Self> {
        if let Some(bad) = stack.data.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid("scale", format!("every entry must be finite and > 0, found {bad}")));
        }
        Ok(ScaleField(stack))
    }

    pub fn ones(shape: Shape) -> Self {
        ScaleField(HeatmapStack::filled(shape, 1.0))
    }

    pub fn shape(&self) -> Shape {
        self.0.shape
    }

    pub fn as_stack(&self) -> &HeatmapStack {
        &self.0
    }

    pub fn into_stack(self) -> HeatmapStack {
        self.0
    }

    /// `alpha = 1/s - 1`.
    pub fn to_alpha(&self) -> AlphaField {
        AlphaField(self.0.map(|s| 1.0 / s - 1.0))
    }
}

/// `alpha = 1/s - 1` per pixel; finite and strictly greater than -1.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaField(HeatmapStack);

impl AlphaField {
    pub fn new(stack: HeatmapStack) -> Result<Self> {
        if let Some(bad) = stack.data.iter().find(|v| !(v.is_finite() && **v > -1.0)) {
            return Err(Error::invalid("alpha", format!("every entry must be finite and > -1, found {bad}")));
        }
        Ok(AlphaField(stack))
    }

    pub fn zeros(shape: Shape) -> Self {
        AlphaField(HeatmapStack::zeros(shape))
    }

    pub fn shape(&self) -> Shape {
        self.0.shape
    }

    pub fn as_stack(&self) -> &HeatmapStack {
        &self.0
    }

    pub fn into_stack(self) -> HeatmapStack {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.data.iter().all(|&a| a == 0.0)
    }

    /// `s = 1/(1 + alpha)`.
    pub fn to_scale(&self) -> ScaleField {
        ScaleField(self.0.map(|a| 1.0 / (1.0 + a)))
    }
}

/// Cells covered by a truncated Gaussian window of the base heatmaps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportMask {
    shape: Shape,
    data: Vec<bool>,
}

impl SupportMask {
    pub fn from_stack(stack: &HeatmapStack) -> Self {
        SupportMask {
            shape: stack.shape,
            data: stack.data.iter().map(|&v| v > 0.0).collect(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, k: usize, x: usize, y: usize) -> bool {
        self.data[self.shape.index(k, x, y)]
    }

    /// Number of covered cells.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }
}
