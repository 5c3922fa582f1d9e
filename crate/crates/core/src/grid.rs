use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// What the stored values are supposed to mean. `Normalized` grids hold
/// signal in `[-1, 1]`; `Unconstrained` grids hold intermediate quantities
/// (latents mid-chain, noise, gradients) that may leave that range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueDomain {
    Normalized,
    Unconstrained,
}

/// Dense `height x width x channels` image stored row-major with interleaved
/// channels: the flat index of `(row, col, ch)` is
/// `(row * width + col) * channels + ch`.
///
/// All pixel math in the crate runs in `f64`. Constructors reject non-finite
/// values so downstream stages can assume every grid they receive is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    domain: ValueDomain,
    values: Vec<f64>,
}

impl ImageGrid {
    /// All-zeros grid.
    pub fn zeros(height: usize, width: usize, channels: usize, domain: ValueDomain) -> Result<Self> {
        Self::check_dims(height, width, channels)?;
        Ok(ImageGrid {
            height,
            width,
            channels,
            domain,
            values: vec![0.0; height * width * channels],
        })
    }

    /// Grid filled with one value.
    pub fn constant(
        height: usize,
        width: usize,
        channels: usize,
        domain: ValueDomain,
        value: f64,
    ) -> Result<Self> {
        let mut g = Self::zeros(height, width, channels, domain)?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                value,
                index: 0,
                context: "ImageGrid::constant",
            });
        }
        g.values.fill(value);
        Ok(g)
    }

    /// Wraps an existing buffer. The buffer length must match the dimensions
    /// and every value must be finite.
    pub fn from_values(
        height: usize,
        width: usize,
        channels: usize,
        domain: ValueDomain,
        values: Vec<f64>,
    ) -> Result<Self> {
        Self::check_dims(height, width, channels)?;
        if values.len() != height * width * channels {
            return Err(Error::DataLength {
                height,
                width,
                channels,
                got: values.len(),
            });
        }
        let g = ImageGrid {
            height,
            width,
            channels,
            domain,
            values,
        };
        g.check_finite("ImageGrid::from_values")?;
        Ok(g)
    }

    /// I.i.d. standard normal draws, one per element, in row-major element
    /// order (so the result is a pure function of the rng state).
    pub fn standard_normal<R: Rng + ?Sized>(
        height: usize,
        width: usize,
        channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut g = Self::zeros(height, width, channels, ValueDomain::Unconstrained)?;
        for v in &mut g.values {
            *v = StandardNormal.sample(rng);
        }
        Ok(g)
    }

    fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::EmptyGrid(height, width, channels));
        }
        Ok(())
    }

    pub(crate) fn check_finite(&self, context: &'static str) -> Result<()> {
        for (index, &value) in self.values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    value,
                    index,
                    context,
                });
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn domain(&self) -> ValueDomain {
        self.domain
    }

    pub fn set_domain(&mut self, domain: ValueDomain) {
        self.domain = domain;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn index_of(&self, row: usize, col: usize, ch: usize) -> usize {
        debug_assert!(row < self.height && col < self.width && ch < self.channels);
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.values[self.index_of(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        let i = self.index_of(row, col, ch);
        self.values[i] = value;
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn expect_same_shape(&self, other: &ImageGrid, context: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
                context,
            })
        }
    }

    /// Element-wise map into a new grid with the given domain tag.
    pub fn map(&self, domain: ValueDomain, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            domain,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two same-shaped grids.
    pub fn zip_map(
        &self,
        other: &ImageGrid,
        domain: ValueDomain,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<ImageGrid> {
        self.expect_same_shape(other, "zip_map")?;
        Ok(ImageGrid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            domain,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Clamps every value into `[-1, 1]` and tags the grid `Normalized`.
    pub fn clamp_normalized(&mut self) {
        for v in &mut self.values {
            *v = v.clamp(-1.0, 1.0);
        }
        self.domain = ValueDomain::Normalized;
    }

    /// Signal values mapped from `[-1, 1]` to intensity `[0, 1]` via
    /// `(v + 1) / 2`. Metric computations run on this representation.
    pub fn to_intensity(&self) -> ImageGrid {
        self.map(ValueDomain::Unconstrained, |v| (v + 1.0) / 2.0)
    }

    /// New grid whose channels are `self`'s followed by `other`'s. Spatial
    /// dimensions must match. Used to feed (latent, condition) pairs to
    /// conditional denoisers.
    pub fn concat_channels(&self, other: &ImageGrid) -> Result<ImageGrid> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
                context: "concat_channels",
            });
        }
        let channels = self.channels + other.channels;
        let mut values = Vec::with_capacity(self.height * self.width * channels);
        let ca = self.channels;
        let cb = other.channels;
        for p in 0..self.height * self.width {
            values.extend_from_slice(&self.values[p * ca..(p + 1) * ca]);
            values.extend_from_slice(&other.values[p * cb..(p + 1) * cb]);
        }
        Ok(ImageGrid {
            height: self.height,
            width: self.width,
            channels,
            domain: ValueDomain::Unconstrained,
            values,
        })
    }

    /// Copies the `size x size` window whose top-left corner is
    /// `(row0, col0)` (must lie fully inside the grid).
    pub fn window(&self, row0: usize, col0: usize, size: usize) -> Result<ImageGrid> {
        if row0 + size > self.height || col0 + size > self.width {
            return Err(Error::InvalidPlan(format!(
                "window {size}x{size} at ({row0}, {col0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut out = ImageGrid::zeros(size, size, self.channels, self.domain)?;
        self.copy_window_into(row0, col0, &mut out);
        Ok(out)
    }

    /// Same as [`window`](Self::window) but writes into a caller-provided
    /// grid of shape `(size, size, channels)`, avoiding an allocation.
    pub fn copy_window_into(&self, row0: usize, col0: usize, out: &mut ImageGrid) {
        let size = out.height;
        debug_assert_eq!(out.width, size);
        debug_assert_eq!(out.channels, self.channels);
        debug_assert!(row0 + size <= self.height && col0 + size <= self.width);
        let row_len = size * self.channels;
        for r in 0..size {
            let src = self.index_of(row0 + r, col0, 0);
            let dst = r * row_len;
            out.values[dst..dst + row_len].copy_from_slice(&self.values[src..src + row_len]);
        }
        out.domain = self.domain;
    }

    /// Extends the grid by `bottom` extra rows and `right` extra columns
    /// using symmetric (mirror-with-repeat) reflection, the same fold the
    /// window planner assumes: index `i >= len` reads `2*len - 1 - i`,
    /// folding again for pads larger than the image.
    pub fn pad_symmetric(&self, bottom: usize, right: usize) -> ImageGrid {
        if bottom == 0 && right == 0 {
            return self.clone();
        }
        let new_h = self.height + bottom;
        let new_w = self.width + right;
        let mut values = vec![0.0; new_h * new_w * self.channels];
        for r in 0..new_h {
            let sr = reflect_index(r, self.height);
            for c in 0..new_w {
                let sc = reflect_index(c, self.width);
                let src = self.index_of(sr, sc, 0);
                let dst = (r * new_w + c) * self.channels;
                values[dst..dst + self.channels]
                    .copy_from_slice(&self.values[src..src + self.channels]);
            }
        }
        ImageGrid {
            height: new_h,
            width: new_w,
            channels: self.channels,
            domain: self.domain,
            values,
        }
    }

    /// Keeps the top-left `height x width` region.
    pub fn crop(&self, height: usize, width: usize) -> Result<ImageGrid> {
        if height > self.height || width > self.width {
            return Err(Error::ShapeMismatch {
                expected: (height, width, self.channels),
                got: self.shape(),
                context: "crop",
            });
        }
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let mut out = ImageGrid::zeros(height, width, self.channels, self.domain)?;
        let row_len = width * self.channels;
        for r in 0..height {
            let src = self.index_of(r, 0, 0);
            let dst = r * row_len;
            out.values[dst..dst + row_len].copy_from_slice(&self.values[src..src + row_len]);
        }
        Ok(out)
    }

    /// One channel extracted as a `height x width x 1` grid.
    pub fn channel(&self, ch: usize) -> Result<ImageGrid> {
        if ch >= self.channels {
            return Err(Error::InvalidMetricInput(format!(
                "channel {ch} out of range 0..{}",
                self.channels
            )));
        }
        let mut values = Vec::with_capacity(self.height * self.width);
        for p in 0..self.height * self.width {
            values.push(self.values[p * self.channels + ch]);
        }
        Ok(ImageGrid {
            height: self.height,
            width: self.width,
            channels: 1,
            domain: self.domain,
            values,
        })
    }
}

/// Folds an index into `[0, len)` by symmetric reflection with period
/// `2 * len`: `len, len+1, ...` map to `len-1, len-2, ...`.
#[inline]
pub(crate) fn reflect_index(i: usize, len: usize) -> usize {
    let m = i % (2 * len);
    if m < len {
        m
    } else {
        2 * len - 1 - m
    }
}
