use serde::{Deserialize, Serialize};

use super::{shape_mismatch, NeuralError, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn for_params<P: Parameterized>(params: &P) -> Self {
        Self::new(params.num_params())
    }

    /// One bias-corrected Adam update of `params` with `grads`.
    pub fn step<P: Parameterized>(&mut self, config: &AdamConfig, params: &mut P, grads: &P) -> Result<(), NeuralError> {
        let n = params.num_params();
        if grads.num_params() != n || self.m.len() != n {
            return shape_mismatch(&[n, n], &[grads.num_params(), self.m.len()]);
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - config.beta1.powi(t);
        let bc2 = 1.0 - config.beta2.powi(t);
        let mut k = 0;
        for (p, g) in params.params_mut().into_iter().zip(grads.params()) {
            if p.shape() != g.shape() {
                return shape_mismatch(p.shape(), g.shape());
            }
            for (w, &g) in p.data_mut().iter_mut().zip(g.data()) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = config.beta1 * *m + (1.0 - config.beta1) * g;
                *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
                k += 1;
            }
        }
        Ok(())
    }
}
