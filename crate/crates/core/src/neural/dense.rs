use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{shape_mismatch, NeuralError, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Fully connected layer `y = act(W x + b)` with `W` shaped `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
            activation,
        }
    }

    /// Xavier-uniform weights, zero bias.
    pub fn xavier<R: Rng>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[output, input], limit, rng),
            bias: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weight.rows()
    }

    /// Single-vector forward pass into a caller-provided buffer.
    pub fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        let n_in = self.input_size();
        let w = self.weight.data();
        for (o, (out, b)) in y.iter_mut().zip(self.bias.data()).enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            let z = b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            *out = self.activation.apply(z);
        }
    }

    /// Batched forward pass: `x` is `[n, in]`, the result `[n, out]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NeuralError> {
        if x.shape().len() != 2 || x.cols() != self.input_size() {
            return shape_mismatch(&[x.shape().first().copied().unwrap_or(0), self.input_size()], x.shape());
        }
        let mut y = Tensor::zeros(&[x.rows(), self.output_size()]);
        for r in 0..x.rows() {
            self.forward_into(x.row(r), y.row_mut(r));
        }
        Ok(y)
    }

    /// Accumulates the gradient of one sample into `grads` and writes the
    /// input gradient into `dx`. `y` is this layer's output for `x`.
    pub fn backward_into(&self, x: &[f64], y: &[f64], dy: &[f64], grads: &mut Dense, dx: &mut [f64]) {
        let n_in = self.input_size();
        dx.iter_mut().for_each(|v| *v = 0.0);
        let w = self.weight.data();
        let gw = grads.weight.data_mut();
        let gb = grads.bias.data_mut();
        for o in 0..self.output_size() {
            let dz = dy[o] * self.activation.derivative_from_output(y[o]);
            gb[o] += dz;
            let row = o * n_in;
            for i in 0..n_in {
                gw[row + i] += dz * x[i];
                dx[i] += dz * w[row + i];
            }
        }
    }

    /// Batched backward pass. Returns parameter gradients summed over rows and
    /// the gradient with respect to `x`.
    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<(Dense, Tensor), NeuralError> {
        let y = self.forward(x)?;
        upstream.expect_shape(y.shape())?;
        let mut grads = Dense::zeros(self.input_size(), self.output_size(), self.activation);
        let mut dx = Tensor::zeros(x.shape());
        for r in 0..x.rows() {
            self.backward_into(x.row(r), y.row(r), upstream.row(r), &mut grads, dx.row_mut(r));
        }
        Ok((grads, dx))
    }
}

impl Parameterized for Dense {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}
