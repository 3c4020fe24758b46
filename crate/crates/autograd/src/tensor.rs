//! Dense NCHW tensors in double precision.

use crate::AutogradError;

/// A dense rank-4 tensor laid out as (batch, channels, height, width),
/// row-major, innermost dimension contiguous.
///
/// Scalars (losses) use the shape `[1, 1, 1, 1]`; per-channel biases use
/// `[1, c, 1, 1]`. Equality is exact bitwise equality of shape and data,
/// which is what the determinism tests want.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    /// A tensor of zeros. Every dimension must be nonzero.
    pub fn zeros(shape: [usize; 4]) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero dimension in {shape:?}");
        let numel = shape.iter().product();
        Self { shape, data: vec![0.0; numel] }
    }

    /// A tensor with every element set to `value`.
    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    /// Wraps an existing buffer; the length must match the shape product.
    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self, AutogradError> {
        if shape.iter().any(|&d| d == 0) || data.len() != shape.iter().product::<usize>() {
            return Err(AutogradError::DataLength { len: data.len(), shape });
        }
        Ok(Self { shape, data })
    }

    /// A scalar tensor of shape `[1, 1, 1, 1]`.
    pub fn scalar(value: f64) -> Self {
        Self { shape: [1, 1, 1, 1], data: vec![value] }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Element accessor in (n, c, y, x) coordinates; bounds-checked.
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f64) {
        let i = self.index(n, c, y, x);
        self.data[i] = value;
    }

    fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cc, h, w] = self.shape;
        debug_assert!(n < self.shape[0] && c < cc && y < h && x < w);
        ((n * cc + c) * h + y) * w + x
    }

    /// The contiguous (height * width) slice for one (batch, channel) plane.
    pub(crate) fn plane(&self, n: usize, c: usize) -> &[f64] {
        let [_, cc, h, w] = self.shape;
        let size = h * w;
        let base = (n * cc + c) * size;
        &self.data[base..base + size]
    }

    pub(crate) fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let [_, cc, h, w] = self.shape;
        let size = h * w;
        let base = (n * cc + c) * size;
        &mut self.data[base..base + size]
    }

    /// Elementwise `self += scale * other`; shapes must already agree.
    pub(crate) fn add_scaled(&mut self, other: &Tensor, scale: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }
}
