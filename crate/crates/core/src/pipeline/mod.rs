//! Two-stage training (per-timestep autoencoder, then an LSTM regressor on
//! the latent sequence), evaluation, checkpointing and streaming prediction.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, FeatureError, FeatureFrame, NormStats, SplitSpec, WindowSet, N_CHANNELS};
use crate::ingest::{CellSeries, IngestError};
use crate::labeling::{eol_from_targets, LabelError, RulTarget};
use crate::neural::{
    Activation, AdamConfig, AutoencoderParams, Dense, Differentiable, LstmParams, NeuralError, Parameterized, Tensor,
};

mod checkpoint;
mod eval;
mod online;
mod train;

pub use checkpoint::{load_bundle, save_bundle, Precision, CHECKPOINT_MAGIC, FORMAT_VERSION};
pub use eval::{compute_metrics, evaluate, CellMetrics, EvalReport, Metrics};
pub use online::{predict_stream, Estimate, OnlinePredictor};
pub use train::{train_autoencoder, train_rul, AeOutcome, EpochRecord, RulBatch, RulOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("{stage} loss diverged at epoch {epoch}")]
    DivergedLoss { stage: &'static str, epoch: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("timestamp {t} s does not follow {previous} s")]
    NonMonotonicTimestamp { t: f64, previous: f64 },
    #[error("non-finite value in streamed sample at {0} s")]
    InvalidSample(f64),
    #[error("checkpoint format version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u8, supported: u8 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cell `{0}` has no RUL labels")]
    MissingLabels(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Every knob of both training stages plus the feature geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// The regressor's learning rate follows a cosine from `lr` down to
    /// `lr * lr_floor_fraction` at the last epoch.
    pub lr_floor_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Non-improving validation epochs tolerated before stopping.
    pub early_stop_patience: usize,
    /// Global gradient-norm clip for the regressor; `None` disables it.
    pub clip_norm: Option<f64>,
    pub hidden_size: usize,
    pub latent_dim: usize,
    pub ae_hidden: Vec<usize>,
    pub ae_epochs: usize,
    pub ae_batch_size: usize,
    pub ae_lr: f64,
    pub rate_s: f64,
    pub window_len: usize,
    pub stride: usize,
    pub deadband_a: f64,
    pub split: SplitRatios,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            lr: 3e-3,
            lr_floor_fraction: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            early_stop_patience: 10,
            clip_norm: Some(1.0),
            hidden_size: 16,
            latent_dim: 3,
            ae_hidden: vec![8],
            ae_epochs: 10,
            ae_batch_size: 256,
            ae_lr: 1e-2,
            // Coarser grid and denser windows than the feature defaults: 64 rows
            // at 120 s see a whole reference cycle, which early-life estimates need.
            rate_s: 120.0,
            window_len: features::DEFAULT_WINDOW_LEN,
            stride: 8,
            deadband_a: crate::ingest::DEFAULT_DEADBAND_A,
            split: SplitRatios::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: &str| Err(PipelineError::InvalidConfig(msg.to_owned()));
        if self.epochs == 0 || self.ae_epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 || self.ae_batch_size == 0 {
            return bad("batch sizes must be at least 1");
        }
        if self.latent_dim == 0 || self.hidden_size == 0 || self.ae_hidden.contains(&0) {
            return bad("layer sizes must be at least 1");
        }
        if self.window_len == 0 || self.stride == 0 {
            return bad("window_len and stride must be at least 1");
        }
        if !(self.rate_s > 0.0 && self.rate_s.is_finite()) {
            return bad("rate_s must be positive");
        }
        if !(self.lr > 0.0 && self.ae_lr > 0.0 && self.eps > 0.0) {
            return bad("lr, ae_lr and eps must be positive");
        }
        if !(0.0..=1.0).contains(&self.lr_floor_fraction) {
            return bad("lr_floor_fraction must lie in [0, 1]");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return bad("clip_norm must be positive");
        }
        if self.deadband_a.is_nan() || self.deadband_a < 0.0 {
            return bad("deadband_a must be non-negative");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// Regressor learning rate for a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr;
        }
        let progress = (epoch.saturating_sub(1)) as f64 / (self.epochs - 1) as f64;
        let floor = self.lr * self.lr_floor_fraction;
        floor + 0.5 * (self.lr - floor) * (1.0 + (std::f64::consts::PI * progress.min(1.0)).cos())
    }

    pub fn ae_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.ae_lr,
            ..self.adam()
        }
    }

    pub(crate) fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// LSTM over the latent sequence with a linear head on the final hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct RulModel {
    pub lstm: LstmParams,
    pub head: Dense,
}

impl RulModel {
    pub fn init(config: &TrainConfig) -> Self {
        let mut rng = config.rng(2);
        let lstm = LstmParams::init(config.latent_dim, config.hidden_size, &mut rng);
        let head = Dense::xavier(config.hidden_size, 1, Activation::Linear, &mut rng);
        Self { lstm, head }
    }

    /// Normalized output for one `steps × latent` sequence.
    pub fn forward_latents(&self, latents: &[f64], steps: usize) -> f64 {
        let h = self.lstm.hidden_size();
        let zeros = vec![0.0; h];
        let cache = self.lstm.forward_unchecked(latents, steps, &zeros, &zeros);
        let mut y = [0.0];
        self.head.forward_into(cache.final_h(), &mut y);
        y[0]
    }
}

impl Parameterized for RulModel {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.lstm.params();
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.lstm.params_mut();
        p.extend(self.head.params_mut());
        p
    }
}

/// Everything needed to turn raw V/I/T into remaining-Ah estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub autoencoder: AutoencoderParams,
    pub model: RulModel,
    pub norm: NormStats,
    pub config: TrainConfig,
    pub split: SplitSpec,
    /// Mean window target over the training cells, the constant baseline.
    pub train_mean_remaining_ah: f64,
    /// Library version that produced the bundle.
    pub version: String,
}

impl ModelBundle {
    /// Freshly initialized (untrained) bundle around a fitted normalizer.
    pub fn init(config: &TrainConfig, norm: NormStats) -> Result<Self, PipelineError> {
        config.validate()?;
        let autoencoder = AutoencoderParams::new(N_CHANNELS, &config.ae_hidden, config.latent_dim, &mut config.rng(1));
        let bundle = Self {
            autoencoder,
            model: RulModel::init(config),
            norm,
            config: config.clone(),
            split: SplitSpec {
                train: Vec::new(),
                val: Vec::new(),
                test: Vec::new(),
            },
            train_mean_remaining_ah: 0.0,
            version: env!("CARGO_PKG_VERSION").to_owned(),
        };
        bundle.check_consistency()?;
        Ok(bundle)
    }

    pub fn window_len(&self) -> usize {
        self.config.window_len
    }

    pub fn latent_dim(&self) -> usize {
        self.autoencoder.latent_size()
    }

    /// Normalizes and encodes one raw `[V, I, T]` row.
    pub fn encode_row(&self, row: [f64; N_CHANNELS], latent: &mut [f64]) {
        self.autoencoder.encode_into(&self.norm.normalize(row), latent);
    }

    /// Latent sequence for a raw window (`window_len × 3`, row-major).
    pub fn encode_window(&self, window: &[f64]) -> Vec<f64> {
        let d = self.latent_dim();
        let steps = window.len() / N_CHANNELS;
        let mut out = vec![0.0; steps * d];
        for (row, z) in window.chunks_exact(N_CHANNELS).zip(out.chunks_exact_mut(d)) {
            self.encode_row([row[0], row[1], row[2]], z);
        }
        out
    }

    /// Remaining Ah from a latent sequence; negative outputs clamp to zero.
    pub fn predict_latents(&self, latents: &[f64]) -> f64 {
        let steps = latents.len() / self.latent_dim();
        self.norm.denormalize_target(self.model.forward_latents(latents, steps)).max(0.0)
    }

    /// Remaining Ah for one raw window.
    pub fn predict_window(&self, window: &[f64]) -> f64 {
        self.predict_latents(&self.encode_window(window))
    }

    /// Predictions for every window of a raw set, in order.
    pub fn predict_windows(&self, set: &WindowSet) -> Result<Vec<f64>, PipelineError> {
        use rayon::prelude::*;
        if set.window_len != self.window_len() {
            return Err(PipelineError::ShapeMismatch(format!(
                "windows hold {} rows, model expects {}",
                set.window_len,
                self.window_len()
            )));
        }
        Ok((0..set.len()).into_par_iter().map(|i| self.predict_window(set.window(i))).collect())
    }

    /// Shared handle for streaming prediction.
    pub fn into_predictor(self) -> OnlinePredictor {
        OnlinePredictor::new(Arc::new(self))
    }

    pub(crate) fn check_consistency(&self) -> Result<(), PipelineError> {
        if self.norm.channels.len() != N_CHANNELS || self.autoencoder.input_size() != N_CHANNELS {
            return Err(PipelineError::ShapeMismatch(format!(
                "normalizer has {} channels, autoencoder input is {}",
                self.norm.channels.len(),
                self.autoencoder.input_size()
            )));
        }
        if self.model.lstm.input_size() != self.latent_dim() || self.model.head.input_size() != self.model.lstm.hidden_size() {
            return Err(PipelineError::ShapeMismatch("regressor does not match the latent size".into()));
        }
        Ok(())
    }
}

/// One cell's raw log together with its RUL targets.
#[derive(Debug, Clone)]
pub struct LabeledCell {
    pub series: CellSeries,
    pub targets: Vec<RulTarget>,
}

/// Resamples a cell onto the configured grid.
pub fn cell_frame(series: &CellSeries, config: &TrainConfig) -> Result<FeatureFrame, PipelineError> {
    Ok(features::resample_uniform_with_deadband(series, config.rate_s, config.deadband_a)?)
}

/// Raw (unnormalized) windows for a set of cells, concatenated in the given
/// order. Cells too short for one window are skipped.
pub fn cell_windows(cells: &[&LabeledCell], config: &TrainConfig) -> Result<WindowSet, PipelineError> {
    use rayon::prelude::*;
    let sets: Vec<Result<Option<WindowSet>, PipelineError>> = cells
        .par_iter()
        .map(|cell| {
            let frame = cell_frame(&cell.series, config)?;
            match features::make_windows(&frame, &cell.targets, config.window_len, config.stride) {
                Ok(set) => Ok(Some(set)),
                Err(FeatureError::FrameTooShort { .. }) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect();
    let mut out = WindowSet::empty(config.window_len, config.stride);
    for set in sets {
        if let Some(set) = set? {
            out.extend(set);
        }
    }
    Ok(out)
}

/// Result of the full two-stage run.
#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub bundle: ModelBundle,
    pub ae_history: Vec<f64>,
    pub history: Vec<EpochRecord>,
}

/// Splits cells, fits the normalizer and target scale on the training cells,
/// trains the autoencoder, then the regressor.
pub fn train_pipeline(cells: &[LabeledCell], config: &TrainConfig) -> Result<TrainedPipeline, PipelineError> {
    config.validate()?;
    let ids: Vec<String> = cells.iter().map(|c| c.series.cell_id().to_owned()).collect();
    let r = config.split;
    let split = features::split_by_cell(&ids, (r.train, r.val, r.test), config.seed)?;
    let pick = |names: &[String]| -> Vec<&LabeledCell> {
        names
            .iter()
            .filter_map(|n| cells.iter().find(|c| c.series.cell_id() == n))
            .collect()
    };
    let (train_cells, val_cells) = (pick(&split.train), pick(&split.val));

    let frames: Vec<FeatureFrame> = train_cells
        .iter()
        .map(|c| cell_frame(&c.series, config))
        .collect::<Result<_, _>>()?;
    let mut norm = features::fit_normalizer(&frames)?;
    let eols: Vec<f64> = train_cells
        .iter()
        .map(|c| eol_from_targets(&c.targets).ok_or_else(|| PipelineError::MissingLabels(c.series.cell_id().to_owned())))
        .collect::<Result<_, _>>()?;
    norm.target_scale_ah = eols.iter().sum::<f64>() / eols.len() as f64;
    log::info!(
        "split: {} train, {} val, {} test cells; target scale {:.3} Ah",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        norm.target_scale_ah
    );

    let vectors = train::timestep_vectors(&frames, &norm);
    let ae = train_autoencoder(&vectors, config)?;
    log::info!("autoencoder: final loss {:.3e}", ae.history.last().copied().unwrap_or(f64::NAN));

    let train_windows = cell_windows(&train_cells, config)?;
    let val_windows = cell_windows(&val_cells, config)?;
    let train_mean = if train_windows.is_empty() {
        0.0
    } else {
        train_windows.targets.iter().sum::<f64>() / train_windows.len() as f64
    };
    let rul = train_rul(&train_windows, &val_windows, &ae.params, &norm, config)?;
    let bundle = ModelBundle {
        autoencoder: ae.params,
        model: rul.model,
        norm,
        config: config.clone(),
        split,
        train_mean_remaining_ah: train_mean,
        version: env!("CARGO_PKG_VERSION").to_owned(),
    };
    Ok(TrainedPipeline {
        bundle,
        ae_history: ae.history,
        history: rul.history,
    })
}

/// `epoch,train_loss,val_rmse` CSV.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_rmse\n");
    for r in history {
        let val = r.val_rmse_ah.map_or_else(String::new, |v| v.to_string());
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, val));
    }
    out
}

impl Differentiable for RulModel {
    type Batch = RulBatch;

    fn loss(&self, batch: &RulBatch) -> f64 {
        train::batch_loss(self, batch)
    }

    fn loss_and_grad(&self, batch: &RulBatch) -> (f64, Self) {
        train::batch_loss_and_grad(self, batch)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn config_rejects_zero_window() {
        let cfg = TrainConfig {
            window_len: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(PipelineError::InvalidConfig(_))));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochz": 3}"#).is_err());
        let cfg: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn cosine_schedule_runs_from_lr_to_floor() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(1), cfg.lr);
        assert!((cfg.lr_at(cfg.epochs) - cfg.lr * cfg.lr_floor_fraction).abs() < 1e-15);
        for e in 1..cfg.epochs {
            assert!(cfg.lr_at(e + 1) <= cfg.lr_at(e));
        }
    }

    #[test]
    fn init_is_seeded() {
        let s = fixtures::series(2000, 1);
        let cfg = fixtures::small_config();
        assert_eq!(fixtures::bundle(&cfg, &s), fixtures::bundle(&cfg, &s));
        let other = TrainConfig { seed: 6, ..cfg.clone() };
        assert_ne!(fixtures::bundle(&cfg, &s).model, fixtures::bundle(&other, &s).model);
    }

    #[test]
    fn predictions_are_never_negative() {
        let s = fixtures::series(2000, 1);
        let cfg = fixtures::small_config();
        let mut b = fixtures::bundle(&cfg, &s);
        b.model.head.bias.data_mut()[0] = -100.0;
        let frame = cell_frame(&s, &cfg).unwrap();
        let targets = crate::labeling::compute_rul_targets(10.0, &[0.0, 100.0]);
        let set = features::make_windows(&frame, &targets, cfg.window_len, 4).unwrap();
        assert!(b.predict_windows(&set).unwrap().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn predict_windows_checks_window_len() {
        let s = fixtures::series(2000, 1);
        let cfg = fixtures::small_config();
        let b = fixtures::bundle(&cfg, &s);
        let frame = cell_frame(&s, &cfg).unwrap();
        let targets = crate::labeling::compute_rul_targets(10.0, &[0.0, 100.0]);
        let set = features::make_windows(&frame, &targets, cfg.window_len + 1, 4).unwrap();
        assert!(matches!(b.predict_windows(&set), Err(PipelineError::ShapeMismatch(_))));
    }

    #[test]
    fn history_csv_leaves_missing_validation_blank() {
        let h = [
            EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_rmse_ah: Some(2.0),
            },
            EpochRecord {
                epoch: 2,
                train_loss: 0.25,
                val_rmse_ah: None,
            },
        ];
        assert_eq!(history_csv(&h), "epoch,train_loss,val_rmse\n1,0.5,2\n2,0.25,\n");
    }
}
