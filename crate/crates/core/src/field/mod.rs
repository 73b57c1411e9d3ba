//! Dense multi-channel 2-D fields.
//!
//! A [`ScalarField`] stores `channels` planes of `height x width` values,
//! row-major inside each plane and channel-outermost overall, so plane `c`
//! is the contiguous slice `data[c*h*w .. (c+1)*h*w]`.

mod io;

pub use io::{export_pgm, load_mdnf, read_mdnf, save_mdnf, write_mdnf, MDNF_MAGIC};

use crate::error::{MdnError, Result};

/// Height, width and channel count of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_channels(self, channels: usize) -> Self {
        Self { channels, ..self }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// An immutable H x W x C grid of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    shape: Shape,
    data: Vec<f64>,
}

/// Gradient of a scalar loss with respect to a field; same layout as the
/// field it differentiates.
pub type GradSignal = ScalarField;

fn check_dims(height: usize, width: usize, channels: usize) -> Result<usize> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(MdnError::Shape(format!(
            "dimensions must be positive, got {height}x{width}x{channels}"
        )));
    }
    height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| MdnError::Shape(format!("dimensions {height}x{width}x{channels} overflow")))
}

impl ScalarField {
    /// Field of the requested shape with every entry equal to `fill`.
    pub fn new(height: usize, width: usize, channels: usize, fill: f64) -> Result<Self> {
        let len = check_dims(height, width, channels)?;
        if !fill.is_finite() {
            return Err(MdnError::NonFinite { index: 0 });
        }
        Ok(Self {
            shape: Shape::new(height, width, channels),
            data: vec![fill; len],
        })
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::new(shape.height, shape.width, shape.channels, 0.0)
    }

    /// Wraps an existing buffer, validating its length and finiteness.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let len = check_dims(height, width, channels)?;
        if data.len() != len {
            return Err(MdnError::Shape(format!(
                "expected {len} values for {height}x{width}x{channels}, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(MdnError::NonFinite { index });
        }
        Ok(Self {
            shape: Shape::new(height, width, channels),
            data,
        })
    }

    pub fn from_shape_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(shape.height, shape.width, shape.channels, data)
    }

    /// Builds a field by evaluating `f(channel, y, x)` at every entry.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let len = check_dims(height, width, channels)?;
        let mut data = Vec::with_capacity(len);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::from_vec(height, width, channels, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, channel: usize, y: usize, x: usize) -> usize {
        (channel * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn get(&self, channel: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(channel, y, x)]
    }

    /// Contiguous slice holding one channel.
    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.shape.plane_len();
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn check_channel(&self, channel: usize) -> Result<()> {
        if channel >= self.shape.channels {
            return Err(MdnError::ChannelRange {
                channel,
                channels: self.shape.channels,
            });
        }
        Ok(())
    }

    /// New single-channel field holding a copy of `channel`.
    pub fn channel(&self, channel: usize) -> Result<ScalarField> {
        self.check_channel(channel)?;
        Ok(Self {
            shape: self.shape.with_channels(1),
            data: self.plane(channel).to_vec(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ScalarField> {
        Self::from_shape_vec(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.ensure_same_shape(other, "zip_map")?;
        Self::from_shape_vec(
            self.shape,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn ensure_same_shape(&self, other: &ScalarField, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(MdnError::Shape(format!(
                "{what}: shape {} does not match {}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Confidence-role check: every value must lie in `[0, 1]`.
    pub fn ensure_unit_interval(&self, what: &str) -> Result<()> {
        if let Some((i, v)) = self
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(MdnError::Domain(format!(
                "{what}: value {v} at flat index {i} is outside [0, 1]"
            )));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Integer translation by `(dx, dy)` pixels with zero fill.
    pub fn translate(&self, dx: isize, dy: isize) -> ScalarField {
        let Shape { height, width, .. } = self.shape;
        let mut data = vec![0.0; self.data.len()];
        for c in 0..self.shape.channels {
            for y in 0..height {
                let sy = y as isize - dy;
                if sy < 0 || sy >= height as isize {
                    continue;
                }
                for x in 0..width {
                    let sx = x as isize - dx;
                    if sx < 0 || sx >= width as isize {
                        continue;
                    }
                    data[(c * height + y) * width + x] = self.get(c, sy as usize, sx as usize);
                }
            }
        }
        ScalarField {
            shape: self.shape,
            data,
        }
    }

    /// Sum of all values.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Position `(x, y)` of the largest value in `channel`; ties resolve to
    /// the lowest row-major index.
    pub fn argmax(&self, channel: usize) -> Result<(usize, usize)> {
        self.check_channel(channel)?;
        let plane = self.plane(channel);
        let mut best = 0;
        for (i, &v) in plane.iter().enumerate() {
            if v > plane[best] {
                best = i;
            }
        }
        Ok((best % self.shape.width, best / self.shape.width))
    }
}

/// Per-edge displacement vectors `(o_x, o_y)` in output-pixel units.
///
/// Channel `e` of both planes serves edge `e` of the associated vote graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    ox: ScalarField,
    oy: ScalarField,
}

impl DisplacementField {
    pub fn new(ox: ScalarField, oy: ScalarField) -> Result<Self> {
        ox.ensure_same_shape(&oy, "displacement field")?;
        Ok(Self { ox, oy })
    }

    pub fn zeros(height: usize, width: usize, edges: usize) -> Result<Self> {
        let z = ScalarField::new(height, width, edges, 0.0)?;
        Ok(Self {
            ox: z.clone(),
            oy: z,
        })
    }

    pub fn ox(&self) -> &ScalarField {
        &self.ox
    }

    pub fn oy(&self) -> &ScalarField {
        &self.oy
    }

    pub fn edge_count(&self) -> usize {
        self.ox.channels()
    }

    pub fn shape(&self) -> Shape {
        self.ox.shape()
    }

    pub fn translate(&self, dx: isize, dy: isize) -> DisplacementField {
        Self {
            ox: self.ox.translate(dx, dy),
            oy: self.oy.translate(dx, dy),
        }
    }

    pub fn into_parts(self) -> (ScalarField, ScalarField) {
        (self.ox, self.oy)
    }
}
