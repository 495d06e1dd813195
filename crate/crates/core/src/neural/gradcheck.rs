//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Parameterized;

/// Models with more parameters than this are checked on a seeded random
/// subsample of this size.
pub const MAX_CHECKED_PARAMS: usize = 10_000;

/// Denominator floor for the relative error, so entries whose true gradient
/// is zero are judged on absolute error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-7;

/// A scalar objective over a batch with an analytic gradient.
pub trait Differentiable: Parameterized + Clone {
    type Batch;

    fn loss(&self, batch: &Self::Batch) -> f64;

    /// Loss and its gradient, laid out like `self`.
    fn loss_and_grad(&self, batch: &Self::Batch) -> (f64, Self);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: Option<usize>,
    pub n_checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares the analytic gradient against `(L(θ+ε) - L(θ-ε)) / 2ε` for every
/// parameter, or a seeded subsample above [`MAX_CHECKED_PARAMS`].
pub fn grad_check<M: Differentiable>(model: &M, batch: &M::Batch, eps: f64, seed: u64) -> GradCheckReport {
    let n = model.num_params();
    let indices: Vec<usize> = if n > MAX_CHECKED_PARAMS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, n, MAX_CHECKED_PARAMS).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    if indices.is_empty() {
        return GradCheckReport {
            max_relative_error: 0.0,
            worst_index: None,
            n_checked: 0,
        };
    }
    let (_, grads) = model.loss_and_grad(batch);
    let analytic = grads.flatten();
    let base = model.flatten();
    let mut probe = model.clone();
    let mut flat = base.clone();
    let mut worst = (0.0, None);
    for &k in &indices {
        flat[k] = base[k] + eps;
        probe.load_flat(&flat).expect("same layout");
        let plus = probe.loss(batch);
        flat[k] = base[k] - eps;
        probe.load_flat(&flat).expect("same layout");
        let minus = probe.loss(batch);
        flat[k] = base[k];
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic[k], numeric);
        if err > worst.0 || worst.1.is_none() {
            worst = (err, Some(k));
        }
    }
    GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        n_checked: indices.len(),
    }
}
