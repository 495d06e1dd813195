//! Symmetric dense autoencoder: `input → hidden… → latent → …hidden → input`.
//! Hidden layers use tanh; the latent and reconstruction layers are linear.

use rand::Rng;

use super::gradcheck::Differentiable;
use super::loss::{mse, mse_grad};
use super::{shape_mismatch, Activation, Dense, NeuralError, Parameterized, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
}

fn stack<R: Rng>(dims: &[usize], rng: &mut R) -> Vec<Dense> {
    let last = dims.len() - 2;
    dims.windows(2)
        .enumerate()
        .map(|(k, d)| {
            let act = if k == last { Activation::Linear } else { Activation::Tanh };
            Dense::xavier(d[0], d[1], act, rng)
        })
        .collect()
}

impl AutoencoderParams {
    pub fn new<R: Rng>(input: usize, hidden: &[usize], latent: usize, rng: &mut R) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(latent);
        let encoder = stack(&dims, rng);
        dims.reverse();
        let decoder = stack(&dims, rng);
        Self { encoder, decoder }
    }

    pub fn input_size(&self) -> usize {
        self.encoder[0].input_size()
    }

    pub fn latent_size(&self) -> usize {
        self.encoder.last().map_or(0, Dense::output_size)
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.encoder.iter().chain(&self.decoder)
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NeuralError> {
        if x.shape().len() != 2 || x.cols() != self.input_size() {
            return shape_mismatch(&[x.shape().first().copied().unwrap_or(0), self.input_size()], x.shape());
        }
        Ok(())
    }

    /// Encodes one vector into `latent`.
    pub fn encode_into(&self, x: &[f64], latent: &mut [f64]) {
        let mut cur = x.to_vec();
        for (k, layer) in self.encoder.iter().enumerate() {
            if k + 1 == self.encoder.len() {
                layer.forward_into(&cur, latent);
            } else {
                let mut next = vec![0.0; layer.output_size()];
                layer.forward_into(&cur, &mut next);
                cur = next;
            }
        }
    }

    /// `[n, input]` to `[n, latent]`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor, NeuralError> {
        self.check_input(x)?;
        let mut z = Tensor::zeros(&[x.rows(), self.latent_size()]);
        for r in 0..x.rows() {
            self.encode_into(x.row(r), z.row_mut(r));
        }
        Ok(z)
    }

    /// Returns `(reconstruction, latent)`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor), NeuralError> {
        let z = self.encode(x)?;
        let mut recon = z.clone();
        for layer in &self.decoder {
            recon = layer.forward(&recon)?;
        }
        Ok((recon, z))
    }

    /// Mean squared reconstruction error over every element of `x`.
    pub fn reconstruction_loss(&self, x: &Tensor) -> Result<f64, NeuralError> {
        let (recon, _) = self.forward(x)?;
        Ok(mse(recon.data(), x.data()))
    }

    /// Reconstruction loss and its gradient with respect to every parameter.
    pub fn reconstruction_grad(&self, x: &Tensor) -> Result<(f64, AutoencoderParams), NeuralError> {
        self.check_input(x)?;
        let mut grads = self.clone();
        grads.zero_params();
        let layers: Vec<&Dense> = self.layers().collect();
        let n_total = x.len() as f64;
        let mut loss = 0.0;
        for r in 0..x.rows() {
            let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len() + 1);
            acts.push(x.row(r).to_vec());
            for layer in &layers {
                let mut y = vec![0.0; layer.output_size()];
                layer.forward_into(acts.last().expect("non-empty"), &mut y);
                acts.push(y);
            }
            let recon = acts.last().expect("non-empty");
            loss += recon.iter().zip(x.row(r)).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
            // mse_grad normalizes by the row length; rescale to the batch total.
            let k = x.cols() as f64 / n_total;
            let mut dy: Vec<f64> = mse_grad(recon, x.row(r)).into_iter().map(|g| g * k).collect();
            let mut grad_layers: Vec<&mut Dense> = grads.encoder.iter_mut().chain(grads.decoder.iter_mut()).collect();
            for l in (0..layers.len()).rev() {
                let mut dx = vec![0.0; layers[l].input_size()];
                layers[l].backward_into(&acts[l], &acts[l + 1], &dy, grad_layers[l], &mut dx);
                dy = dx;
            }
        }
        Ok((if x.is_empty() { 0.0 } else { loss / n_total }, grads))
    }
}

impl Parameterized for AutoencoderParams {
    fn params(&self) -> Vec<&Tensor> {
        self.layers().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

impl Differentiable for AutoencoderParams {
    type Batch = Tensor;

    fn loss(&self, x: &Tensor) -> f64 {
        self.reconstruction_loss(x).expect("batch shape checked by caller")
    }

    fn loss_and_grad(&self, x: &Tensor) -> (f64, Self) {
        self.reconstruction_grad(x).expect("batch shape checked by caller")
    }
}
