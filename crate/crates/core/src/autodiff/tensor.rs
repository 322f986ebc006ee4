use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::AutodiffError;

/// Dense row-major `f32` array with a fixed shape.
///
/// Tensors are plain values. Gradient tracking happens when a tensor is
/// registered on a [`Tape`](super::Tape), which hands back a [`Var`](super::Var).
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self, AutodiffError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(AutodiffError::Shape(format!(
                "every extent must be >= 1, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(AutodiffError::Shape(format!(
                "shape {shape:?} holds {numel} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let numel = shape.iter().product();
        Self::new(shape, vec![value; numel]).expect("valid shape")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f32) -> Self {
        Self::full(&[1], value)
    }

    pub fn from_vec(data: Vec<f32>) -> Self {
        let n = data.len();
        Self::new(&[n], data).expect("non-empty vector")
    }

    /// Zero-mean Gaussian samples.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f32, rng: &mut R) -> Self {
        let normal = Normal::new(0.0f32, std).expect("finite std");
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| normal.sample(rng)).collect();
        Self::new(shape, data).expect("valid shape")
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f32, hi: f32, rng: &mut R) -> Self {
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| rng.random_range(lo..hi)).collect();
        Self::new(shape, data).expect("valid shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f32 {
        assert!(
            self.is_scalar(),
            "item() on tensor of shape {:?}",
            self.shape
        );
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, AutodiffError> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() || shape.contains(&0) {
            return Err(AutodiffError::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Shape as `(n, c, h, w)`; errors unless the tensor is 4-D.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize), AutodiffError> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(AutodiffError::Shape(format!(
                "expected an NCHW tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Channel plane `(n, c)` of an NCHW tensor.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let (_, ch, h, w) = self.dims4().expect("NCHW tensor");
        let hw = h * w;
        let start = (n * ch + c) * hw;
        &self.data[start..start + hw]
    }

    /// Channels `[start, start + len)` of every sample of an NCHW tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor, AutodiffError> {
        let (n, c, h, w) = self.dims4()?;
        if len == 0 || start + len > c {
            return Err(AutodiffError::Shape(format!(
                "channel slice {start}..{} out of range for {c} channels",
                start + len
            )));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * len * hw);
        for s in 0..n {
            let base = (s * c + start) * hw;
            data.extend_from_slice(&self.data[base..base + len * hw]);
        }
        Tensor::new(&[n, len, h, w], data)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        if self.data.len() <= PREVIEW {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "{:?}..", &self.data[..PREVIEW])
        }
    }
}
