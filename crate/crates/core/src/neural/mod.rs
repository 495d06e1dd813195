//! Hand-written differentiable blocks with analytic gradients.
//!
//! Every block stores its parameters as [`Tensor`]s and returns gradients as
//! a value of its own type, so optimizers and the finite-difference checker
//! can walk parameters and gradients in lockstep through [`Parameterized`].

use rand::Rng;
use thiserror::Error;

pub mod adam;
pub mod autoencoder;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod lstm;

pub use adam::{AdamConfig, AdamState};
pub use autoencoder::AutoencoderParams;
pub use dense::{Activation, Dense};
pub use gradcheck::{grad_check, Differentiable, GradCheckReport};
pub use lstm::{LstmCache, LstmGrads, LstmParams};

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },
    #[error("tensor holds {values} values but shape {shape:?} needs {expected}")]
    BadLength {
        shape: Vec<usize>,
        values: usize,
        expected: usize,
    },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("empty sequence")]
    EmptySequence,
}

pub(crate) fn shape_mismatch<T>(expected: &[usize], actual: &[usize]) -> Result<T, NeuralError> {
    Err(NeuralError::ShapeMismatch {
        expected: expected.to_vec(),
        actual: actual.to_vec(),
    })
}

/// Dense row-major array of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Checked constructor: length must match the shape and every value must
    /// be finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NeuralError> {
        let expected = shape.iter().product();
        if data.len() != expected {
            return Err(NeuralError::BadLength {
                shape,
                values: data.len(),
                expected,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite(i));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn uniform<R: Rng>(shape: &[usize], limit: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| if limit > 0.0 { rng.random_range(-limit..limit) } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn expect_shape(&self, expected: &[usize]) -> Result<(), NeuralError> {
        if self.shape != expected {
            return shape_mismatch(expected, &self.shape);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A container of parameter tensors in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn zero_params(&mut self) {
        for t in self.params_mut() {
            t.fill(0.0);
        }
    }

    fn scale_params(&mut self, k: f64) {
        for t in self.params_mut() {
            t.scale(k);
        }
    }

    /// Elementwise `self += other`; both must share a layout.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (a, b) in self.params_mut().into_iter().zip(other.params()) {
            a.add_assign(b);
        }
    }

    fn squared_norm(&self) -> f64 {
        self.params().iter().flat_map(|t| t.data()).map(|v| v * v).sum()
    }

    /// Copies every parameter into one flat vector.
    fn flatten(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Inverse of [`Parameterized::flatten`].
    fn load_flat(&mut self, flat: &[f64]) -> Result<(), NeuralError> {
        let n = self.num_params();
        if flat.len() != n {
            return shape_mismatch(&[n], &[flat.len()]);
        }
        let mut offset = 0;
        for t in self.params_mut() {
            let len = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        self.params().iter().map(|t| t.shape().to_vec()).collect()
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|t| t.all_finite())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
