//! Dense and coordinate-sparse 2D spatial tensors.
//!
//! A tensor is `channels x height x width`; the sparse form stores the
//! lexicographically sorted `(h, w)` coordinates of its active sites next
//! to one feature column per site. A site is active iff its channel column
//! is not all-zero, so an active column may still contain zero channels.
//! Arithmetic is carried at 64-bit precision; serialization (see [`crate::io`])
//! narrows to 32 bits.

use crate::{Error, Result};

/// Dense `(C, H, W)` tensor, row-major in `(c, h, w)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "dims must be positive");
        DenseTensor {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn from_values(
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::shape(format!(
                "value buffer has {} elements, dims {}x{}x{} require {}",
                values.len(),
                channels,
                height,
                width,
                channels * height * width
            )));
        }
        Ok(DenseTensor { channels, height, width, values })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spatial_size(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, c: usize, h: usize, w: usize) -> f64 {
        self.values[(c * self.height + h) * self.width + w]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, h: usize, w: usize) -> &mut f64 {
        &mut self.values[(c * self.height + h) * self.width + w]
    }

    /// One channel plane as a contiguous slice of length `H*W`.
    #[inline]
    pub fn channel(&self, c: usize) -> &[f64] {
        let hw = self.height * self.width;
        &self.values[c * hw..(c + 1) * hw]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let hw = self.height * self.width;
        &mut self.values[c * hw..(c + 1) * hw]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_dims(&self, other: &DenseTensor) -> bool {
        self.dims() == other.dims()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Feature column at spatial site `(h, w)` across all channels.
    pub fn column(&self, h: usize, w: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.at(c, h, w)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseTensor {
        DenseTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> Result<DenseTensor> {
        if !self.same_dims(other) {
            return Err(Error::shape(format!(
                "dims {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(DenseTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> DenseTensor {
        self.map(|v| k * v)
    }

    pub fn add_assign(&mut self, other: &DenseTensor) -> Result<()> {
        if !self.same_dims(other) {
            return Err(Error::shape("add_assign dim mismatch".to_string()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Coordinate-list sparse view of a `(C, H, W)` tensor.
///
/// `coords` are strictly lexicographically sorted `(h, w)` pairs; each entry
/// of `features` is the length-`C` column at the matching site.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor2D {
    channels: usize,
    height: usize,
    width: usize,
    coords: Vec<(usize, usize)>,
    features: Vec<Vec<f64>>,
}

impl SparseTensor2D {
    /// Assemble from parts, validating the structural invariants.
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        coords: Vec<(usize, usize)>,
        features: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if coords.len() != features.len() {
            return Err(Error::shape(format!(
                "{} coords but {} feature columns",
                coords.len(),
                features.len()
            )));
        }
        for (i, &(h, w)) in coords.iter().enumerate() {
            if h >= height || w >= width {
                return Err(Error::shape(format!(
                    "coordinate ({h}, {w}) out of bounds for {height}x{width}"
                )));
            }
            if i > 0 && coords[i - 1] >= coords[i] {
                return Err(Error::shape(
                    "coordinates must be strictly sorted without duplicates".to_string(),
                ));
            }
            if features[i].len() != channels {
                return Err(Error::shape(format!(
                    "feature column {} has {} channels, expected {}",
                    i,
                    features[i].len(),
                    channels
                )));
            }
        }
        Ok(SparseTensor2D { channels, height, width, coords, features })
    }

    pub fn empty(channels: usize, height: usize, width: usize) -> Self {
        SparseTensor2D {
            channels,
            height,
            width,
            coords: Vec::new(),
            features: Vec::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of active sites (the coordinate count N).
    pub fn active_sites(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[f64])> {
        self.coords
            .iter()
            .copied()
            .zip(self.features.iter().map(|f| f.as_slice()))
    }
}

/// Extract the active sites of `t`: sites where any channel magnitude
/// exceeds `zero_tol`. Feature columns are copied verbatim, so
/// sub-tolerance channel values inside an active column are preserved.
pub fn to_sparse(t: &DenseTensor, zero_tol: f64) -> SparseTensor2D {
    debug_assert!(zero_tol >= 0.0);
    let (channels, height, width) = t.dims();
    let mut coords = Vec::new();
    let mut features = Vec::new();
    for h in 0..height {
        for w in 0..width {
            let mut active = false;
            for c in 0..channels {
                if t.at(c, h, w).abs() > zero_tol {
                    active = true;
                    break;
                }
            }
            if active {
                coords.push((h, w));
                features.push(t.column(h, w));
            }
        }
    }
    SparseTensor2D { channels, height, width, coords, features }
}

/// Exact inverse of [`to_sparse`] at `zero_tol = 0`: zeros everywhere
/// except the stored sites.
pub fn to_dense(s: &SparseTensor2D) -> DenseTensor {
    let (channels, height, width) = s.dims();
    let mut out = DenseTensor::zeros(channels, height, width);
    for ((h, w), col) in s.iter() {
        for (c, &v) in col.iter().enumerate() {
            *out.at_mut(c, h, w) = v;
        }
    }
    out
}

/// Fraction of active sites: sites whose channel column is not all-zero,
/// divided by `H*W`.
pub fn occupancy(t: &DenseTensor) -> f64 {
    let (channels, height, width) = t.dims();
    let mut active = 0usize;
    for h in 0..height {
        for w in 0..width {
            for c in 0..channels {
                if t.at(c, h, w) != 0.0 {
                    active += 1;
                    break;
                }
            }
        }
    }
    active as f64 / (height * width) as f64
}
