//! Canonical LSTM cell (no peepholes) unrolled over a sequence.
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! o = σ(W_o x + U_o h + b_o)      g = tanh(W_g x + U_g h + b_g)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```

use rand::Rng;

use super::{shape_mismatch, sigmoid, NeuralError, Parameterized, Tensor};

const GATES: usize = 4;
// Gate order inside the stacked blocks.
const I: usize = 0;
const F: usize = 1;
const O: usize = 2;
const G: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input-to-hidden weights `[hidden, input]` for gates i, f, o, g.
    pub w: [Tensor; GATES],
    /// Hidden-to-hidden weights `[hidden, hidden]`.
    pub u: [Tensor; GATES],
    /// Biases `[hidden]`.
    pub b: [Tensor; GATES],
}

impl LstmParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            w: std::array::from_fn(|_| Tensor::zeros(&[hidden_size, input_size])),
            u: std::array::from_fn(|_| Tensor::zeros(&[hidden_size, hidden_size])),
            b: std::array::from_fn(|_| Tensor::zeros(&[hidden_size])),
        }
    }

    /// Uniform(-k, k) weights with `k = 1/sqrt(hidden)`, zero biases except
    /// the forget gate at 1.
    pub fn init<R: Rng>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden_size as f64).sqrt();
        let mut p = Self {
            w: std::array::from_fn(|_| Tensor::uniform(&[hidden_size, input_size], k, rng)),
            u: std::array::from_fn(|_| Tensor::uniform(&[hidden_size, hidden_size], k, rng)),
            b: std::array::from_fn(|_| Tensor::zeros(&[hidden_size])),
        };
        p.b[F].fill(1.0);
        p
    }

    pub fn input_size(&self) -> usize {
        self.w[0].cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w[0].rows()
    }

    fn check_shapes(&self) -> Result<(), NeuralError> {
        let (n_in, h) = (self.input_size(), self.hidden_size());
        for k in 0..GATES {
            self.w[k].expect_shape(&[h, n_in])?;
            self.u[k].expect_shape(&[h, h])?;
            self.b[k].expect_shape(&[h])?;
        }
        Ok(())
    }

    /// Runs the recurrence over `seq` (`[T, input]`) from `(h0, c0)`.
    pub fn forward(&self, seq: &Tensor, h0: &[f64], c0: &[f64]) -> Result<LstmCache, NeuralError> {
        self.check_shapes()?;
        let (n_in, h) = (self.input_size(), self.hidden_size());
        if seq.shape().len() != 2 || seq.cols() != n_in {
            return shape_mismatch(&[seq.shape().first().copied().unwrap_or(0), n_in], seq.shape());
        }
        if seq.rows() == 0 {
            return Err(NeuralError::EmptySequence);
        }
        if h0.len() != h || c0.len() != h {
            return shape_mismatch(&[h, h], &[h0.len(), c0.len()]);
        }
        Ok(self.forward_unchecked(seq.data(), seq.rows(), h0, c0))
    }

    /// Forward pass over a flat `[steps × input]` slice; shapes are trusted.
    pub(crate) fn forward_unchecked(&self, xs: &[f64], steps: usize, h0: &[f64], c0: &[f64]) -> LstmCache {
        let (n_in, h) = (self.input_size(), self.hidden_size());
        let mut cache = LstmCache {
            steps,
            input_size: n_in,
            hidden_size: h,
            xs: xs.to_vec(),
            hs: Vec::with_capacity((steps + 1) * h),
            cs: Vec::with_capacity((steps + 1) * h),
            gates: vec![0.0; steps * GATES * h],
            tanh_c: vec![0.0; steps * h],
        };
        cache.hs.extend_from_slice(h0);
        cache.cs.extend_from_slice(c0);
        let w: [&[f64]; GATES] = std::array::from_fn(|k| self.w[k].data());
        let u: [&[f64]; GATES] = std::array::from_fn(|k| self.u[k].data());
        let b: [&[f64]; GATES] = std::array::from_fn(|k| self.b[k].data());
        for t in 0..steps {
            let x = &xs[t * n_in..(t + 1) * n_in];
            let h_prev = cache.hs[t * h..(t + 1) * h].to_vec();
            let gates = &mut cache.gates[t * GATES * h..(t + 1) * GATES * h];
            for k in 0..GATES {
                for j in 0..h {
                    let wr = &w[k][j * n_in..(j + 1) * n_in];
                    let ur = &u[k][j * h..(j + 1) * h];
                    let mut z = b[k][j];
                    for (a, v) in wr.iter().zip(x) {
                        z += a * v;
                    }
                    for (a, v) in ur.iter().zip(&h_prev) {
                        z += a * v;
                    }
                    gates[k * h + j] = if k == G { z.tanh() } else { sigmoid(z) };
                }
            }
            for j in 0..h {
                let c_prev = cache.cs[t * h + j];
                let c = gates[F * h + j] * c_prev + gates[I * h + j] * gates[G * h + j];
                let tc = c.tanh();
                cache.tanh_c[t * h + j] = tc;
                cache.cs.push(c);
                cache.hs.push(gates[O * h + j] * tc);
            }
        }
        cache
    }

    /// Exact BPTT. `d_hidden` is the upstream gradient for every hidden state
    /// (`[T, hidden]`), `d_c_final` an optional gradient on the last cell state.
    pub fn backward(&self, cache: &LstmCache, d_hidden: &Tensor, d_c_final: Option<&[f64]>) -> Result<LstmGrads, NeuralError> {
        let (n_in, h) = (self.input_size(), self.hidden_size());
        if cache.input_size != n_in || cache.hidden_size != h {
            return shape_mismatch(&[n_in, h], &[cache.input_size, cache.hidden_size]);
        }
        d_hidden.expect_shape(&[cache.steps, h])?;
        if let Some(dc) = d_c_final {
            if dc.len() != h {
                return shape_mismatch(&[h], &[dc.len()]);
            }
        }
        let mut grads = LstmParams::zeros(n_in, h);
        let mut d_input = Tensor::zeros(&[cache.steps, n_in]);
        let (d_h0, d_c0) = self.backward_into(cache, |t| Some(d_hidden.row(t)), d_c_final, &mut grads, Some(d_input.data_mut()));
        Ok(LstmGrads {
            params: grads,
            d_input,
            d_h0,
            d_c0,
        })
    }

    /// BPTT core. `dh_at(t)` supplies the upstream gradient on `h_t` (or
    /// `None` for zero). Parameter gradients are added to `grads`; input
    /// gradients are written to `d_input` when given. Returns `(dh0, dc0)`.
    pub(crate) fn backward_into<'a>(
        &self,
        cache: &LstmCache,
        dh_at: impl Fn(usize) -> Option<&'a [f64]>,
        d_c_final: Option<&[f64]>,
        grads: &mut LstmParams,
        mut d_input: Option<&mut [f64]>,
    ) -> (Vec<f64>, Vec<f64>) {
        let (n_in, h) = (self.input_size(), self.hidden_size());
        let mut dh_next = vec![0.0; h];
        let mut dc_next = d_c_final.map_or_else(|| vec![0.0; h], <[f64]>::to_vec);
        let mut dz = vec![0.0; GATES * h];
        for t in (0..cache.steps).rev() {
            let gates = &cache.gates[t * GATES * h..(t + 1) * GATES * h];
            let tanh_c = &cache.tanh_c[t * h..(t + 1) * h];
            let c_prev = &cache.cs[t * h..(t + 1) * h];
            let h_prev = &cache.hs[t * h..(t + 1) * h];
            let x = &cache.xs[t * n_in..(t + 1) * n_in];
            let upstream = dh_at(t);
            for j in 0..h {
                let dh = dh_next[j] + upstream.map_or(0.0, |u| u[j]);
                let (i, f, o, g) = (gates[I * h + j], gates[F * h + j], gates[O * h + j], gates[G * h + j]);
                let tc = tanh_c[j];
                let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                dz[I * h + j] = dc * g * i * (1.0 - i);
                dz[F * h + j] = dc * c_prev[j] * f * (1.0 - f);
                dz[O * h + j] = dh * tc * o * (1.0 - o);
                dz[G * h + j] = dc * i * (1.0 - g * g);
                dc_next[j] = dc * f;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            if let Some(d_in) = d_input.as_deref_mut() {
                d_in[t * n_in..(t + 1) * n_in].iter_mut().for_each(|v| *v = 0.0);
            }
            let LstmParams { w: gw_all, u: gu_all, b: gb_all } = &mut *grads;
            for k in 0..GATES {
                let w = self.w[k].data();
                let u = self.u[k].data();
                let gw = gw_all[k].data_mut();
                let gu = gu_all[k].data_mut();
                let gb = gb_all[k].data_mut();
                for j in 0..h {
                    let d = dz[k * h + j];
                    if d == 0.0 {
                        continue;
                    }
                    gb[j] += d;
                    let wr = j * n_in;
                    for m in 0..n_in {
                        gw[wr + m] += d * x[m];
                    }
                    let ur = j * h;
                    for m in 0..h {
                        gu[ur + m] += d * h_prev[m];
                        dh_next[m] += d * u[ur + m];
                    }
                    if let Some(d_in) = d_input.as_deref_mut() {
                        for m in 0..n_in {
                            d_in[t * n_in + m] += d * w[wr + m];
                        }
                    }
                }
            }
        }
        (dh_next, dc_next)
    }
}

impl Parameterized for LstmParams {
    fn params(&self) -> Vec<&Tensor> {
        self.w.iter().chain(&self.u).chain(&self.b).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.w.iter_mut().chain(self.u.iter_mut()).chain(self.b.iter_mut()).collect()
    }
}

/// Activations recorded by the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCache {
    steps: usize,
    input_size: usize,
    hidden_size: usize,
    xs: Vec<f64>,
    /// `h_0 .. h_T`, `(T + 1) × hidden`.
    hs: Vec<f64>,
    /// `c_0 .. c_T`.
    cs: Vec<f64>,
    /// Gate activations `[T, 4, hidden]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCache {
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Hidden state after step `t` (0-based).
    pub fn hidden(&self, t: usize) -> &[f64] {
        let h = self.hidden_size;
        &self.hs[(t + 1) * h..(t + 2) * h]
    }

    pub fn final_h(&self) -> &[f64] {
        self.hidden(self.steps - 1)
    }

    pub fn final_c(&self) -> &[f64] {
        let h = self.hidden_size;
        &self.cs[self.steps * h..(self.steps + 1) * h]
    }

    /// `[T, hidden]` hidden sequence.
    pub fn hidden_sequence(&self) -> Tensor {
        let h = self.hidden_size;
        Tensor::new(vec![self.steps, h], self.hs[h..].to_vec()).expect("consistent cache")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub params: LstmParams,
    /// `[T, input]`.
    pub d_input: Tensor,
    pub d_h0: Vec<f64>,
    pub d_c0: Vec<f64>,
}
