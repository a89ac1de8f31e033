//! Color images as pure quaternion matrices.

use crate::error::{Error, Result};
use crate::qmatrix::QMatrix;

/// A color image `R i + G j + B k` on the `[0, 255]` intensity scale.
///
/// The real plane is kept at zero; constructors and [`PureQImage::from_qmatrix`]
/// project it away. Values are not clamped; see [`PureQImage::quantized`].
#[derive(Debug, Clone, PartialEq)]
pub struct PureQImage(QMatrix);

impl PureQImage {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(QMatrix::zeros(rows, cols))
    }

    pub fn constant(rows: usize, cols: usize, rgb: [f64; 3]) -> Self {
        let mut m = QMatrix::zeros(rows, cols);
        for c in 0..3 {
            m.plane_mut(c + 1).iter_mut().for_each(|v| *v = rgb[c]);
        }
        Self(m)
    }

    /// Three row-major channel planes.
    pub fn from_channels(rows: usize, cols: usize, r: Vec<f64>, g: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        QMatrix::from_planes(rows, cols, [vec![0.0; rows * cols], r, g, b]).map(Self)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut m = QMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let px = f(i, j);
                for c in 0..3 {
                    m.plane_mut(c + 1)[i * cols + j] = px[c];
                }
            }
        }
        Self(m)
    }

    /// Interleaved 8-bit RGB, row-major.
    pub fn from_rgb8(rows: usize, cols: usize, data: &[u8]) -> Result<Self> {
        if data.len() != rows * cols * 3 {
            return Err(Error::LengthMismatch {
                op: "PureQImage::from_rgb8",
                left: data.len(),
                right: rows * cols * 3,
            });
        }
        Ok(Self::from_fn(rows, cols, |i, j| {
            let o = (i * cols + j) * 3;
            [data[o] as f64, data[o + 1] as f64, data[o + 2] as f64]
        }))
    }

    /// Takes ownership of a quaternion matrix and zeroes its real plane.
    pub fn from_qmatrix(mut m: QMatrix) -> Self {
        m.purify();
        Self(m)
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn as_qmatrix(&self) -> &QMatrix {
        &self.0
    }

    pub fn into_qmatrix(self) -> QMatrix {
        self.0
    }

    /// Channel `c` (0 = R, 1 = G, 2 = B), row-major.
    pub fn channel(&self, c: usize) -> &[f64] {
        self.0.plane(c + 1)
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        self.0.plane_mut(c + 1)
    }

    pub fn pixel(&self, i: usize, j: usize) -> [f64; 3] {
        let q = self.0.get(i, j);
        [q.a1, q.a2, q.a3]
    }

    /// Clamps to `[0, 255]` and rounds to the nearest integer level.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for c in 0..3 {
            out.channel_mut(c).iter_mut().for_each(|v| *v = quantize(*v) as f64);
        }
        out
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        let (m, n) = self.shape();
        let mut out = Vec::with_capacity(m * n * 3);
        for idx in 0..m * n {
            for c in 0..3 {
                out.push(quantize(self.channel(c)[idx]));
            }
        }
        out
    }

    /// Adds `value` to every sample of every channel.
    pub fn offset(&self, value: f64) -> Self {
        let mut out = self.clone();
        for c in 0..3 {
            out.channel_mut(c).iter_mut().for_each(|v| *v += value);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    /// Top-left `rows × cols` crop starting at `(r0, c0)`.
    pub fn crop(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Self> {
        if r0 + rows > self.rows() || c0 + cols > self.cols() {
            return Err(Error::DimensionMismatch {
                op: "PureQImage::crop",
                left: (r0 + rows, c0 + cols),
                right: self.shape(),
            });
        }
        Ok(Self::from_fn(rows, cols, |i, j| self.pixel(r0 + i, c0 + j)))
    }
}

fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}
