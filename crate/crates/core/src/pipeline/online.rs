//! Streaming prediction. Samples are resampled onto the same grid the batch
//! path uses, encoded row by row, and the regressor runs over the latest
//! `window_len` rows once that many exist.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::Serialize;

use super::{ModelBundle, PipelineError};
use crate::features::{grid_time, interpolate_row};
use crate::ingest::RawSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    /// Grid time of the window's last row.
    pub timestamp_s: f64,
    pub remaining_ah: f64,
}

#[derive(Debug, Clone)]
pub struct OnlinePredictor {
    bundle: Arc<ModelBundle>,
    t0: Option<f64>,
    /// Index of the next grid row to emit.
    next_row: usize,
    prev: Option<RawSample>,
    last: Option<RawSample>,
    latents: VecDeque<f64>,
    rows_in_buffer: usize,
    finished: bool,
}

impl OnlinePredictor {
    pub fn new(bundle: Arc<ModelBundle>) -> Self {
        let cap = bundle.window_len() * bundle.latent_dim();
        Self {
            bundle,
            t0: None,
            next_row: 0,
            prev: None,
            last: None,
            latents: VecDeque::with_capacity(cap),
            rows_in_buffer: 0,
            finished: false,
        }
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    /// Grid rows produced so far.
    pub fn rows_emitted(&self) -> usize {
        self.next_row
    }

    /// Feeds one sample; returns the estimates it completes. A grid row that
    /// falls exactly on a sample is resolved by the following sample (or by
    /// [`OnlinePredictor::finish`]), as in batch resampling.
    pub fn push(&mut self, sample: RawSample) -> Result<Vec<Estimate>, PipelineError> {
        let fields = [sample.timestamp_s, sample.voltage_v, sample.current_a, sample.temperature_c];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(PipelineError::InvalidSample(sample.timestamp_s));
        }
        if let Some(last) = self.last {
            if sample.timestamp_s <= last.timestamp_s {
                return Err(PipelineError::NonMonotonicTimestamp {
                    t: sample.timestamp_s,
                    previous: last.timestamp_s,
                });
            }
        }
        let mut out = Vec::new();
        match self.last {
            None => self.t0 = Some(sample.timestamp_s),
            Some(a) => {
                let rate = self.bundle.config.rate_s;
                let t0 = self.t0.expect("set by the first sample");
                loop {
                    let t = grid_time(t0, rate, self.next_row);
                    if t >= sample.timestamp_s {
                        break;
                    }
                    self.emit_row(&a, &sample, t, &mut out);
                }
            }
        }
        self.prev = self.last;
        self.last = Some(sample);
        Ok(out)
    }

    /// Flushes a grid row that coincides with the final sample.
    pub fn finish(&mut self) -> Vec<Estimate> {
        let mut out = Vec::new();
        if self.finished {
            return out;
        }
        self.finished = true;
        if let (Some(a), Some(b), Some(t0)) = (self.prev, self.last, self.t0) {
            let t = grid_time(t0, self.bundle.config.rate_s, self.next_row);
            if t <= b.timestamp_s {
                self.emit_row(&a, &b, t, &mut out);
            }
        }
        out
    }

    fn emit_row(&mut self, a: &RawSample, b: &RawSample, t: f64, out: &mut Vec<Estimate>) {
        let row = interpolate_row(a, b, t, 0.0, self.bundle.config.deadband_a);
        let d = self.bundle.latent_dim();
        let w = self.bundle.window_len();
        let mut z = vec![0.0; d];
        self.bundle.encode_row(row.channels(), &mut z);
        if self.rows_in_buffer == w {
            self.latents.drain(..d);
        } else {
            self.rows_in_buffer += 1;
        }
        self.latents.extend(z);
        self.next_row += 1;
        if self.rows_in_buffer == w {
            let remaining_ah = self.bundle.predict_latents(self.latents.make_contiguous());
            out.push(Estimate {
                timestamp_s: t,
                remaining_ah,
            });
        }
    }
}

/// Runs a whole sample sequence through a fresh predictor.
pub fn predict_stream(
    bundle: Arc<ModelBundle>,
    samples: impl IntoIterator<Item = RawSample>,
) -> Result<Vec<Estimate>, PipelineError> {
    let mut p = OnlinePredictor::new(bundle);
    let mut out = Vec::new();
    for s in samples {
        out.extend(p.push(s)?);
    }
    out.extend(p.finish());
    Ok(out)
}
