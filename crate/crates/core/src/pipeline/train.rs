use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PipelineError, RulModel, TrainConfig};
use crate::features::{FeatureFrame, NormStats, WindowSet, N_CHANNELS};
use crate::neural::{AdamState, AutoencoderParams, Parameterized, Tensor};

/// Normalized `[V, I, T]` rows of every frame, stacked as `[n, 3]`.
pub(crate) fn timestep_vectors(frames: &[FeatureFrame], norm: &NormStats) -> Tensor {
    let data: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.rows.iter())
        .flat_map(|r| norm.normalize(r.channels()))
        .collect();
    let n = data.len() / N_CHANNELS;
    Tensor::new(vec![n, N_CHANNELS], data).expect("finite normalized rows")
}

#[derive(Debug, Clone)]
pub struct AeOutcome {
    pub params: AutoencoderParams,
    /// Full-set reconstruction loss before training.
    pub initial_loss: f64,
    /// Full-set reconstruction loss after each epoch.
    pub history: Vec<f64>,
}

fn gather_rows(x: &Tensor, idx: &[usize]) -> Tensor {
    let c = x.cols();
    let mut data = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    Tensor::new(vec![idx.len(), c], data).expect("rows of a valid tensor")
}

/// Fits the autoencoder on per-timestep vectors (`[n, channels]`).
pub fn train_autoencoder(vectors: &Tensor, config: &TrainConfig) -> Result<AeOutcome, PipelineError> {
    config.validate()?;
    if vectors.shape().len() != 2 || vectors.rows() == 0 {
        return Err(PipelineError::EmptyTrainingSet);
    }
    let mut rng = config.rng(1);
    let mut params = AutoencoderParams::new(vectors.cols(), &config.ae_hidden, config.latent_dim, &mut rng);
    let initial_loss = params.reconstruction_loss(vectors)?;
    let adam = config.ae_adam();
    let mut state = AdamState::for_params(&params);
    let mut order: Vec<usize> = (0..vectors.rows()).collect();
    let mut history = Vec::with_capacity(config.ae_epochs);
    for epoch in 1..=config.ae_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.ae_batch_size) {
            let batch = gather_rows(vectors, chunk);
            let (loss, grads) = params.reconstruction_grad(&batch)?;
            if !loss.is_finite() {
                return Err(PipelineError::DivergedLoss { stage: "autoencoder", epoch });
            }
            state.step(&adam, &mut params, &grads)?;
        }
        let loss = params.reconstruction_loss(vectors)?;
        if !loss.is_finite() || !params.all_finite() {
            return Err(PipelineError::DivergedLoss { stage: "autoencoder", epoch });
        }
        log::debug!("autoencoder epoch {epoch}: loss {loss:.4e}");
        history.push(loss);
    }
    Ok(AeOutcome {
        params,
        initial_loss,
        history,
    })
}

/// Latent sequences with normalized targets, ready for the regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct RulBatch {
    /// `count × steps × latent`, row-major.
    pub latents: Vec<f64>,
    pub steps: usize,
    pub targets: Vec<f64>,
}

impl RulBatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn seq(&self, i: usize) -> &[f64] {
        let span = self.latents.len() / self.targets.len();
        &self.latents[i * span..(i + 1) * span]
    }

    /// Encodes raw windows with a frozen autoencoder.
    pub fn encode(set: &WindowSet, ae: &AutoencoderParams, norm: &NormStats) -> Self {
        let d = ae.latent_size();
        let span = set.window_len * d;
        let mut latents = vec![0.0; set.len() * span];
        latents.par_chunks_mut(span.max(1)).enumerate().for_each(|(i, out)| {
            for (row, z) in set.window(i).chunks_exact(N_CHANNELS).zip(out.chunks_exact_mut(d)) {
                ae.encode_into(&norm.normalize([row[0], row[1], row[2]]), z);
            }
        });
        Self {
            latents,
            steps: set.window_len,
            targets: set.targets.iter().map(|t| norm.normalize_target(*t)).collect(),
        }
    }
}

/// Mean squared error over the listed items and its gradient. Per-item
/// gradients may run in parallel; they are summed in item order, so the
/// result does not depend on the thread count.
fn items_loss_and_grad(model: &RulModel, batch: &RulBatch, items: &[usize]) -> (f64, RulModel) {
    let n = items.len().max(1) as f64;
    let h = model.lstm.hidden_size();
    let per_item: Vec<(f64, RulModel)> = items
        .par_iter()
        .map(|&i| {
            let zeros = vec![0.0; h];
            let cache = model.lstm.forward_unchecked(batch.seq(i), batch.steps, &zeros, &zeros);
            let mut y = [0.0];
            model.head.forward_into(cache.final_h(), &mut y);
            let err = y[0] - batch.targets[i];
            let mut g = model.clone();
            g.zero_params();
            let mut dh = vec![0.0; h];
            model.head.backward_into(cache.final_h(), &y, &[2.0 * err / n], &mut g.head, &mut dh);
            let last = batch.steps - 1;
            model
                .lstm
                .backward_into(&cache, |t| (t == last).then_some(dh.as_slice()), None, &mut g.lstm, None);
            (err * err, g)
        })
        .collect();
    let mut total = model.clone();
    total.zero_params();
    let mut loss = 0.0;
    for (l, g) in &per_item {
        loss += l;
        total.accumulate(g);
    }
    (loss / n, total)
}

pub(crate) fn batch_loss(model: &RulModel, batch: &RulBatch) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let sq: f64 = (0..batch.len())
        .map(|i| {
            let e = model.forward_latents(batch.seq(i), batch.steps) - batch.targets[i];
            e * e
        })
        .sum();
    sq / batch.len() as f64
}

pub(crate) fn batch_loss_and_grad(model: &RulModel, batch: &RulBatch) -> (f64, RulModel) {
    let items: Vec<usize> = (0..batch.len()).collect();
    items_loss_and_grad(model, batch, &items)
}

/// RMSE in Ah of clamped, denormalized predictions.
fn rmse_ah(model: &RulModel, batch: &RulBatch, norm: &NormStats) -> f64 {
    let sq: Vec<f64> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let pred = norm.denormalize_target(model.forward_latents(batch.seq(i), batch.steps)).max(0.0);
            let e = pred - norm.denormalize_target(batch.targets[i]);
            e * e
        })
        .collect();
    (sq.iter().sum::<f64>() / batch.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean normalized MSE over the epoch's minibatches.
    pub train_loss: f64,
    pub val_rmse_ah: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RulOutcome {
    /// Parameters of the best validation epoch (the last epoch without
    /// validation data).
    pub model: RulModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Trains the regressor on raw windows encoded by the frozen autoencoder.
/// Stops once validation RMSE has failed to improve for more than
/// `early_stop_patience` consecutive epochs.
pub fn train_rul(
    train: &WindowSet,
    val: &WindowSet,
    ae: &AutoencoderParams,
    norm: &NormStats,
    config: &TrainConfig,
) -> Result<RulOutcome, PipelineError> {
    config.validate()?;
    if train.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    if ae.latent_size() != config.latent_dim {
        return Err(PipelineError::ShapeMismatch(format!(
            "autoencoder latent size {} differs from latent_dim {}",
            ae.latent_size(),
            config.latent_dim
        )));
    }
    let train_batch = RulBatch::encode(train, ae, norm);
    let val_batch = RulBatch::encode(val, ae, norm);
    let mut model = RulModel::init(config);
    let mut adam = config.adam();
    let mut state = AdamState::for_params(&model);
    let mut rng = config.rng(3);
    let mut order: Vec<usize> = (0..train_batch.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, RulModel)> = None;
    let mut stale = 0usize;
    for epoch in 1..=config.epochs {
        adam.lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (loss, mut grads) = items_loss_and_grad(&model, &train_batch, chunk);
            if !loss.is_finite() {
                return Err(PipelineError::DivergedLoss { stage: "regressor", epoch });
            }
            weighted += loss * chunk.len() as f64;
            if let Some(clip) = config.clip_norm {
                let norm = grads.squared_norm().sqrt();
                if norm > clip {
                    grads.scale_params(clip / norm);
                }
            }
            state.step(&adam, &mut model, &grads)?;
        }
        if !model.all_finite() {
            return Err(PipelineError::DivergedLoss { stage: "regressor", epoch });
        }
        let train_loss = weighted / train_batch.len() as f64;
        let val_rmse_ah = (!val_batch.is_empty()).then(|| rmse_ah(&model, &val_batch, norm));
        log::info!(
            "epoch {epoch}: train loss {train_loss:.5}, val RMSE {}",
            val_rmse_ah.map_or("n/a".into(), |v| format!("{v:.3} Ah"))
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_rmse_ah,
        });
        match val_rmse_ah {
            None => best = Some((f64::NAN, epoch, model.clone())),
            Some(v) if best.as_ref().is_none_or(|b| v < b.0) => {
                best = Some((v, epoch, model.clone()));
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if stale > config.early_stop_patience {
                    log::info!("early stop after epoch {epoch}");
                    break;
                }
            }
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(RulOutcome {
        model,
        history,
        best_epoch,
    })
}

/// RMSE in Ah of a model over raw windows.
#[cfg(test)]
pub(crate) fn window_rmse_ah(model: &RulModel, set: &WindowSet, ae: &AutoencoderParams, norm: &NormStats) -> f64 {
    rmse_ah(model, &RulBatch::encode(set, ae, norm), norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::WindowProvenance;
    use crate::neural::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 8,
            batch_size: 8,
            hidden_size: 4,
            latent_dim: 2,
            ae_hidden: vec![4],
            ae_epochs: 3,
            ae_batch_size: 16,
            window_len: 6,
            stride: 1,
            ..TrainConfig::default()
        }
    }

    fn norm() -> NormStats {
        NormStats {
            channels: crate::features::CHANNELS.iter().map(|s| (*s).to_owned()).collect(),
            mean: [3.7, 0.0, 25.0],
            std: [0.3, 1.0, 2.0],
            target_scale_ah: 10.0,
        }
    }

    /// Windows whose target is a smooth function of the mean voltage.
    fn synthetic_windows(n: usize, w: usize, seed: u64) -> WindowSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = WindowSet::empty(w, 1);
        for k in 0..n {
            let level: f64 = rng.random_range(-1.0..1.0);
            for _ in 0..w {
                set.data.extend_from_slice(&[
                    3.7 + 0.3 * level + rng.random_range(-0.01..0.01),
                    rng.random_range(-1.0..1.0),
                    25.0 + rng.random_range(-1.0..1.0),
                ]);
            }
            set.targets.push(5.0 + 4.0 * level);
            set.provenance.push(WindowProvenance {
                cell_id: format!("c{}", k % 3),
                start_row: k,
                end_row: k + w,
            });
        }
        set
    }

    #[test]
    fn autoencoder_training_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::uniform(&[200, 3], 1.0, &mut rng);
        let a = train_autoencoder(&x, &small_config()).unwrap();
        let b = train_autoencoder(&x, &small_config()).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn linear_autoencoder_reaches_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::uniform(&[100, 3], 1.0, &mut rng);
        let cfg = TrainConfig {
            latent_dim: 3,
            ae_hidden: vec![],
            ae_epochs: 200,
            ae_batch_size: 10,
            ..small_config()
        };
        let out = train_autoencoder(&x, &cfg).unwrap();
        let last = *out.history.last().unwrap();
        assert!(last < 1e-3 * out.initial_loss, "{last} vs {}", out.initial_loss);
    }

    #[test]
    fn empty_training_sets_are_rejected() {
        assert!(matches!(
            train_autoencoder(&Tensor::zeros(&[0, 3]), &small_config()),
            Err(PipelineError::EmptyTrainingSet)
        ));
        let ae = AutoencoderParams::new(3, &[4], 2, &mut ChaCha8Rng::seed_from_u64(0));
        let empty = WindowSet::empty(6, 1);
        assert!(matches!(
            train_rul(&empty, &empty, &ae, &norm(), &small_config()),
            Err(PipelineError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn regressor_improves_on_its_initialization() {
        let cfg = small_config();
        let ae = AutoencoderParams::new(3, &[4], 2, &mut ChaCha8Rng::seed_from_u64(1));
        let train = synthetic_windows(120, 6, 1);
        let val = synthetic_windows(30, 6, 2);
        let before = window_rmse_ah(&RulModel::init(&cfg), &train, &ae, &norm());
        let out = train_rul(&train, &val, &ae, &norm(), &cfg).unwrap();
        let after = window_rmse_ah(&out.model, &train, &ae, &norm());
        assert!(after < before, "{after} !< {before}");
        let again = train_rul(&train, &val, &ae, &norm(), &cfg).unwrap();
        assert_eq!(out.history, again.history);
        assert_eq!(out.model, again.model);
    }

    #[test]
    fn zero_patience_stops_at_first_non_improving_epoch() {
        let cfg = TrainConfig {
            epochs: 40,
            early_stop_patience: 0,
            lr: 0.05,
            ..small_config()
        };
        let ae = AutoencoderParams::new(3, &[4], 2, &mut ChaCha8Rng::seed_from_u64(1));
        let out = train_rul(&synthetic_windows(60, 6, 3), &synthetic_windows(20, 6, 4), &ae, &norm(), &cfg).unwrap();
        let vals: Vec<f64> = out.history.iter().map(|r| r.val_rmse_ah.unwrap()).collect();
        let last = vals.len() - 1;
        if vals.len() < cfg.epochs {
            // Every epoch before the last improved; the last did not.
            assert!(vals[..last].windows(2).all(|w| w[1] < w[0]));
            assert!(vals[last] >= vals[last - 1]);
            assert_eq!(out.best_epoch, last);
        }
        assert_eq!(
            rmse_ah(&out.model, &RulBatch::encode(&synthetic_windows(20, 6, 4), &ae, &norm()), &norm()),
            vals[out.best_epoch - 1]
        );
    }

    #[test]
    fn regressor_gradients_match_finite_differences() {
        let cfg = small_config();
        let ae = AutoencoderParams::new(3, &[4], 2, &mut ChaCha8Rng::seed_from_u64(2));
        let batch = RulBatch::encode(&synthetic_windows(5, 6, 9), &ae, &norm());
        let mut model = RulModel::init(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for b in &mut model.lstm.b {
            *b = Tensor::uniform(&[4], 0.5, &mut rng);
        }
        let report = grad_check(&model, &batch, 1e-5, 0);
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }
}
