//! Uniform resampling, normalization, moving windows and cell splits.
//!
//! The feature channels are fixed to voltage, current and temperature.
//! Throughput travels alongside each row but only ever feeds target
//! alignment, never the model input.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CellSeries, RawSample, DEFAULT_DEADBAND_A};
use crate::labeling::RulTarget;

/// Model input channels, in order.
pub const CHANNELS: [&str; 3] = ["voltage_v", "current_a", "temperature_c"];
pub const N_CHANNELS: usize = CHANNELS.len();

pub const DEFAULT_RATE_S: f64 = 60.0;
pub const DEFAULT_WINDOW_LEN: usize = 64;
pub const DEFAULT_STRIDE: usize = 16;

const WINDOW_FILE_MAGIC: &[u8; 4] = b"RKWS";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("resample rate {rate_s} s yields fewer than 2 rows")]
    RateTooCoarse { rate_s: f64 },
    #[error("channel `{0}` is constant over the training data")]
    ConstantChannel(&'static str),
    #[error("no training frames")]
    NoFrames,
    #[error("frame has {rows} rows, window needs {window_len}")]
    FrameTooShort { rows: usize, window_len: usize },
    #[error("invalid window parameters: window_len = {window_len}, stride = {stride}")]
    InvalidWindow { window_len: usize, stride: usize },
    #[error("no RUL targets to align windows against")]
    EmptyTargets,
    #[error("need at least 3 cells to split, got {0}")]
    TooFewCells(usize),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid window file: {0}")]
    InvalidWindowFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub t: f64,
    pub voltage_v: f64,
    pub current_a: f64,
    pub temperature_c: f64,
    pub cumulative_discharge_ah: f64,
}

impl FeatureRow {
    pub fn channels(&self) -> [f64; N_CHANNELS] {
        [self.voltage_v, self.current_a, self.temperature_c]
    }
}

/// Uniformly sampled V/I/T with the discharge throughput at each row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub cell_id: String,
    pub rate_s: f64,
    pub rows: Vec<FeatureRow>,
}

impl FeatureFrame {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub(crate) fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + (b - a) * w
}

/// Discharge current magnitude counted towards throughput.
pub(crate) fn discharge_magnitude(current_a: f64, deadband_a: f64) -> f64 {
    if current_a < -deadband_a {
        -current_a
    } else {
        0.0
    }
}

/// Interpolates one grid row inside the raw interval `[a, b]`.
/// `throughput_at_a` is the cumulative discharge at `a`.
pub(crate) fn interpolate_row(a: &RawSample, b: &RawSample, t: f64, throughput_at_a: f64, deadband_a: f64) -> FeatureRow {
    let w = ((t - a.timestamp_s) / (b.timestamp_s - a.timestamp_s)).clamp(0.0, 1.0);
    let current_a = lerp(a.current_a, b.current_a, w);
    let da = discharge_magnitude(a.current_a, deadband_a);
    let db = discharge_magnitude(b.current_a, deadband_a);
    let partial = 0.5 * (da + lerp(da, db, w)) * (t - a.timestamp_s).max(0.0) / 3600.0;
    FeatureRow {
        t,
        voltage_v: lerp(a.voltage_v, b.voltage_v, w),
        current_a,
        temperature_c: lerp(a.temperature_c, b.temperature_c, w),
        cumulative_discharge_ah: throughput_at_a + partial,
    }
}

pub(crate) fn interval_throughput(a: &RawSample, b: &RawSample, deadband_a: f64) -> f64 {
    0.5 * (discharge_magnitude(a.current_a, deadband_a) + discharge_magnitude(b.current_a, deadband_a))
        * (b.timestamp_s - a.timestamp_s)
        / 3600.0
}

/// Grid time of row `k`.
pub(crate) fn grid_time(t0: f64, rate_s: f64, k: usize) -> f64 {
    t0 + k as f64 * rate_s
}

/// Linear interpolation onto `t0 + k * rate_s`, using the default deadband
/// for throughput integration.
pub fn resample_uniform(series: &CellSeries, rate_s: f64) -> Result<FeatureFrame, FeatureError> {
    resample_uniform_with_deadband(series, rate_s, DEFAULT_DEADBAND_A)
}

/// Grid row `k` at time `t_k` is interpolated on the raw interval
/// `[s_j, s_{j+1})` containing it; the last raw timestamp uses the final
/// interval. Throughput integrates the discharge current (currents inside
/// the deadband count as zero) with the trapezoid rule.
pub fn resample_uniform_with_deadband(series: &CellSeries, rate_s: f64, deadband_a: f64) -> Result<FeatureFrame, FeatureError> {
    if !(rate_s > 0.0 && rate_s.is_finite()) {
        return Err(FeatureError::RateTooCoarse { rate_s });
    }
    let samples = series.samples();
    let t0 = samples[0].timestamp_s;
    let t_last = samples[samples.len() - 1].timestamp_s;
    let mut rows = Vec::new();
    let mut j = 0usize;
    let mut throughput_at_j = 0.0;
    let mut k = 0usize;
    loop {
        let t = grid_time(t0, rate_s, k);
        if t > t_last {
            break;
        }
        while j + 2 < samples.len() && samples[j + 1].timestamp_s <= t {
            throughput_at_j += interval_throughput(&samples[j], &samples[j + 1], deadband_a);
            j += 1;
        }
        rows.push(interpolate_row(&samples[j], &samples[j + 1], t, throughput_at_j, deadband_a));
        k += 1;
    }
    if rows.len() < 2 {
        return Err(FeatureError::RateTooCoarse { rate_s });
    }
    Ok(FeatureFrame {
        cell_id: series.cell_id().to_owned(),
        rate_s,
        rows,
    })
}

/// Per-channel normalization plus the scalar that maps remaining Ah to the
/// regression target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub channels: Vec<String>,
    pub mean: [f64; N_CHANNELS],
    pub std: [f64; N_CHANNELS],
    /// Mean throughput-to-EOL of the training cells; targets are
    /// `remaining_ah / target_scale_ah`.
    pub target_scale_ah: f64,
}

/// Global per-channel mean and population standard deviation over all rows.
pub fn fit_normalizer(frames: &[FeatureFrame]) -> Result<NormStats, FeatureError> {
    let n: usize = frames.iter().map(|f| f.rows.len()).sum();
    if frames.is_empty() || n == 0 {
        return Err(FeatureError::NoFrames);
    }
    let rows = || frames.iter().flat_map(|f| f.rows.iter());
    let mut mean = [0.0; N_CHANNELS];
    for r in rows() {
        for (m, v) in mean.iter_mut().zip(r.channels()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = [0.0; N_CHANNELS];
    for r in rows() {
        for c in 0..N_CHANNELS {
            let d = r.channels()[c] - mean[c];
            var[c] += d * d;
        }
    }
    let mut std = [0.0; N_CHANNELS];
    for c in 0..N_CHANNELS {
        std[c] = (var[c] / n as f64).sqrt();
        if std[c].is_nan() || std[c] <= 1e-12 * mean[c].abs().max(1.0) {
            return Err(FeatureError::ConstantChannel(CHANNELS[c]));
        }
    }
    Ok(NormStats {
        channels: CHANNELS.iter().map(|s| (*s).to_owned()).collect(),
        mean,
        std,
        target_scale_ah: 1.0,
    })
}

impl NormStats {
    pub fn normalize(&self, channels: [f64; N_CHANNELS]) -> [f64; N_CHANNELS] {
        std::array::from_fn(|c| (channels[c] - self.mean[c]) / self.std[c])
    }

    pub fn denormalize(&self, z: [f64; N_CHANNELS]) -> [f64; N_CHANNELS] {
        std::array::from_fn(|c| z[c] * self.std[c] + self.mean[c])
    }

    /// Same frame with V/I/T replaced by their normalized values.
    pub fn normalize_frame(&self, frame: &FeatureFrame) -> FeatureFrame {
        self.map_frame(frame, |z| self.normalize(z))
    }

    pub fn denormalize_frame(&self, frame: &FeatureFrame) -> FeatureFrame {
        self.map_frame(frame, |z| self.denormalize(z))
    }

    fn map_frame(&self, frame: &FeatureFrame, f: impl Fn([f64; N_CHANNELS]) -> [f64; N_CHANNELS]) -> FeatureFrame {
        let rows = frame
            .rows
            .iter()
            .map(|r| {
                let [v, i, t] = f(r.channels());
                FeatureRow {
                    voltage_v: v,
                    current_a: i,
                    temperature_c: t,
                    ..*r
                }
            })
            .collect();
        FeatureFrame {
            cell_id: frame.cell_id.clone(),
            rate_s: frame.rate_s,
            rows,
        }
    }

    pub fn normalize_target(&self, remaining_ah: f64) -> f64 {
        remaining_ah / self.target_scale_ah
    }

    pub fn denormalize_target(&self, y: f64) -> f64 {
        y * self.target_scale_ah
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowProvenance {
    pub cell_id: String,
    /// Half-open row range in the source frame.
    pub start_row: usize,
    pub end_row: usize,
}

/// Fixed-length windows stored row-major as `count × window_len × 3`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowSet {
    pub window_len: usize,
    pub stride: usize,
    pub data: Vec<f64>,
    /// Remaining Ah at each window's last row.
    pub targets: Vec<f64>,
    pub provenance: Vec<WindowProvenance>,
}

impl WindowSet {
    pub fn empty(window_len: usize, stride: usize) -> Self {
        Self {
            window_len,
            stride,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Window `i` as `window_len` consecutive `[V, I, T]` rows.
    pub fn window(&self, i: usize) -> &[f64] {
        let span = self.window_len * N_CHANNELS;
        &self.data[i * span..(i + 1) * span]
    }

    /// Appends another set with the same geometry.
    pub fn extend(&mut self, other: WindowSet) {
        assert_eq!(self.window_len, other.window_len, "window length mismatch");
        self.data.extend(other.data);
        self.targets.extend(other.targets);
        self.provenance.extend(other.provenance);
    }
}

/// Remaining Ah at `throughput` by linear interpolation between the sorted
/// targets, held constant beyond either end.
pub fn interpolate_target(targets: &[RulTarget], throughput: f64) -> f64 {
    let first = targets[0];
    if throughput <= first.cumulative_discharge_ah {
        return first.remaining_ah;
    }
    let idx = targets.partition_point(|t| t.cumulative_discharge_ah <= throughput);
    if idx >= targets.len() {
        return targets[targets.len() - 1].remaining_ah;
    }
    let (a, b) = (targets[idx - 1], targets[idx]);
    let span = b.cumulative_discharge_ah - a.cumulative_discharge_ah;
    if span <= 0.0 {
        return b.remaining_ah;
    }
    lerp(a.remaining_ah, b.remaining_ah, (throughput - a.cumulative_discharge_ah) / span)
}

/// Cuts windows of `window_len` rows every `stride` rows. Each target is the
/// remaining Ah at the window's last row.
pub fn make_windows(frame: &FeatureFrame, targets: &[RulTarget], window_len: usize, stride: usize) -> Result<WindowSet, FeatureError> {
    if window_len == 0 || stride == 0 {
        return Err(FeatureError::InvalidWindow { window_len, stride });
    }
    if frame.rows.len() < window_len {
        return Err(FeatureError::FrameTooShort {
            rows: frame.rows.len(),
            window_len,
        });
    }
    if targets.is_empty() {
        return Err(FeatureError::EmptyTargets);
    }
    let mut sorted = targets.to_vec();
    sorted.sort_by(|a, b| a.cumulative_discharge_ah.total_cmp(&b.cumulative_discharge_ah));
    let count = (frame.rows.len() - window_len) / stride + 1;
    let mut set = WindowSet::empty(window_len, stride);
    set.data.reserve(count * window_len * N_CHANNELS);
    for w in 0..count {
        let start = w * stride;
        let end = start + window_len;
        for row in &frame.rows[start..end] {
            set.data.extend_from_slice(&row.channels());
        }
        set.targets
            .push(interpolate_target(&sorted, frame.rows[end - 1].cumulative_discharge_ah));
        set.provenance.push(WindowProvenance {
            cell_id: frame.cell_id.clone(),
            start_row: start,
            end_row: end,
        });
    }
    Ok(set)
}

#[derive(Debug, Serialize, Deserialize)]
struct WindowFileHeader {
    #[serde(rename = "W")]
    window_len: usize,
    channels: Vec<String>,
    count: usize,
    dtype: String,
    byte_order: String,
    stride: usize,
    provenance: Vec<WindowProvenance>,
}

/// Writes `RKWS`, a little-endian `u32` header length, the JSON header, the
/// window tensor as little-endian f32 and then the targets as f32.
pub fn write_window_set<W: Write>(set: &WindowSet, mut sink: W) -> Result<(), FeatureError> {
    let header = WindowFileHeader {
        window_len: set.window_len,
        channels: CHANNELS.iter().map(|s| (*s).to_owned()).collect(),
        count: set.len(),
        dtype: "f32".into(),
        byte_order: "little-endian".into(),
        stride: set.stride,
        provenance: set.provenance.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(8 + json.len() + 4 * (set.data.len() + set.targets.len()));
    buf.extend_from_slice(WINDOW_FILE_MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in set.data.iter().chain(&set.targets) {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    sink.write_all(&buf)?;
    Ok(())
}

pub fn read_window_set<R: Read>(mut source: R) -> Result<WindowSet, FeatureError> {
    let bad = |m: &str| FeatureError::InvalidWindowFile(m.to_owned());
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != WINDOW_FILE_MAGIC {
        return Err(bad("missing magic"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let header_end = 8usize.checked_add(header_len).ok_or_else(|| bad("header length"))?;
    let header: WindowFileHeader = serde_json::from_slice(bytes.get(8..header_end).ok_or_else(|| bad("truncated header"))?)
        .map_err(|e| FeatureError::InvalidWindowFile(e.to_string()))?;
    if header.dtype != "f32" || header.byte_order != "little-endian" || header.channels.len() != N_CHANNELS {
        return Err(bad("unsupported dtype, byte order or channel count"));
    }
    let n_data = header.count * header.window_len * N_CHANNELS;
    let payload = &bytes[header_end..];
    if payload.len() != 4 * (n_data + header.count) || header.provenance.len() != header.count {
        return Err(bad("payload size does not match header"));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(WindowSet {
        window_len: header.window_len,
        stride: header.stride,
        data: values[..n_data].to_vec(),
        targets: values[n_data..].to_vec(),
        provenance: header.provenance,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitSpec {
    pub fn held_out(&self) -> Vec<String> {
        self.val.iter().chain(&self.test).cloned().collect()
    }
}

/// Shuffles cells with a seeded RNG and assigns rounded shares, moving cells
/// from the largest partition until every partition holds at least one.
pub fn split_by_cell(cell_ids: &[String], ratios: (f64, f64, f64), seed: u64) -> Result<SplitSpec, FeatureError> {
    let n = cell_ids.len();
    if n < 3 {
        return Err(FeatureError::TooFewCells(n));
    }
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(*r >= 0.0 && r.is_finite())) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(FeatureError::InvalidSplit(format!("ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let unique: std::collections::BTreeSet<_> = cell_ids.iter().collect();
    if unique.len() != n {
        return Err(FeatureError::InvalidSplit("duplicate cell ids".into()));
    }
    let mut counts = [(a * n as f64).round() as i64, (b * n as f64).round() as i64, 0];
    counts[2] = n as i64 - counts[0] - counts[1];
    while let Some(small) = counts.iter().position(|&k| k < 1) {
        let large = (0..3).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).expect("three partitions");
        counts[large] -= 1;
        counts[small] += 1;
    }
    let mut shuffled = cell_ids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val) = (counts[0] as usize, counts[1] as usize);
    let mut split = SplitSpec {
        train: shuffled[..n_train].to_vec(),
        val: shuffled[n_train..n_train + n_val].to_vec(),
        test: shuffled[n_train + n_val..].to_vec(),
    };
    split.train.sort();
    split.val.sort();
    split.test.sort();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: &[(f64, f64, f64, f64)]) -> CellSeries {
        let samples = points
            .iter()
            .map(|&(t, v, i, temp)| RawSample {
                timestamp_s: t,
                voltage_v: v,
                current_a: i,
                temperature_c: temp,
            })
            .collect();
        CellSeries::new("c", samples, 2.0).unwrap()
    }

    fn frame_from(values: &[[f64; 3]]) -> FeatureFrame {
        FeatureFrame {
            cell_id: "f".into(),
            rate_s: 1.0,
            rows: values
                .iter()
                .enumerate()
                .map(|(k, &[v, i, t])| FeatureRow {
                    t: k as f64,
                    voltage_v: v,
                    current_a: i,
                    temperature_c: t,
                    cumulative_discharge_ah: k as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn identity_resample() {
        let pts: Vec<_> = (0..50).map(|k| (k as f64, 3.5 + 0.01 * k as f64, -1.0, 25.0 + 0.1 * k as f64)).collect();
        let s = series(&pts);
        let f = resample_uniform(&s, 1.0).unwrap();
        assert_eq!(f.len(), 50);
        for (row, p) in f.rows.iter().zip(&pts) {
            assert!((row.voltage_v - p.1).abs() < 1e-9);
            assert!((row.temperature_c - p.3).abs() < 1e-9);
            assert!((row.t - p.0).abs() < 1e-9);
        }
    }

    #[test]
    fn two_sample_interpolation() {
        let s = series(&[(0.0, 3.0, 0.0, 25.0), (10.0, 4.0, 0.0, 25.0)]);
        let f = resample_uniform(&s, 5.0).unwrap();
        let v: Vec<f64> = f.rows.iter().map(|r| r.voltage_v).collect();
        assert_eq!(v, vec![3.0, 3.5, 4.0]);
    }

    #[test]
    fn constant_discharge_throughput() {
        let pts: Vec<_> = (0..=360).map(|k| (10.0 * k as f64, 3.7, -2.0, 25.0)).collect();
        let s = series(&pts);
        for rate in [1.0, 7.0, 60.0, 600.0, 3600.0] {
            let f = resample_uniform(&s, rate).unwrap();
            let last = f.rows.last().unwrap();
            let expected = 2.0 * last.t / 3600.0;
            assert!((last.cumulative_discharge_ah - expected).abs() < 1e-6, "rate {rate}");
        }
        let f = resample_uniform(&s, 60.0).unwrap();
        assert!((f.rows.last().unwrap().cumulative_discharge_ah - 2.0).abs() < 1e-6);
    }

    #[test]
    fn coarse_rate_rejected() {
        let s = series(&[(0.0, 3.0, 0.0, 25.0), (10.0, 4.0, 0.0, 25.0)]);
        assert!(matches!(resample_uniform(&s, 11.0), Err(FeatureError::RateTooCoarse { .. })));
        assert!(resample_uniform(&s, 0.0).is_err());
    }

    #[test]
    fn two_point_statistics() {
        let f = frame_from(&[[3.0, 0.0, 20.0], [5.0, 1.0, 21.0]]);
        let n = fit_normalizer(&[f]).unwrap();
        assert_eq!(n.mean[0], 4.0);
        assert_eq!(n.std[0], 1.0);
    }

    #[test]
    fn constant_temperature_rejected() {
        let f = frame_from(&[[3.0, 0.0, 20.0], [5.0, 1.0, 20.0]]);
        assert!(matches!(fit_normalizer(&[f]), Err(FeatureError::ConstantChannel("temperature_c"))));
        assert!(matches!(fit_normalizer(&[]), Err(FeatureError::NoFrames)));
    }

    #[test]
    fn normalize_roundtrip() {
        let f = frame_from(&[[3.0, -1.0, 20.0], [5.0, 1.0, 21.0], [3.3, 0.2, 25.5]]);
        let n = fit_normalizer(std::slice::from_ref(&f)).unwrap();
        let back = n.denormalize_frame(&n.normalize_frame(&f));
        for (a, b) in back.rows.iter().zip(&f.rows) {
            for (x, y) in a.channels().iter().zip(b.channels()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn window_counts() {
        let f = frame_from(&[[1.0, 0.0, 0.0]; 10]);
        let t = [RulTarget {
            cumulative_discharge_ah: 0.0,
            remaining_ah: 1.0,
        }];
        assert_eq!(make_windows(&f, &t, 4, 1).unwrap().len(), 7);
        assert_eq!(make_windows(&f, &t, 10, 1).unwrap().len(), 1);
        assert_eq!(make_windows(&f, &t, 4, 3).unwrap().len(), 3);
        assert!(matches!(make_windows(&f, &t, 11, 1), Err(FeatureError::FrameTooShort { .. })));
        assert!(matches!(make_windows(&f, &[], 4, 1), Err(FeatureError::EmptyTargets)));
        assert!(matches!(make_windows(&f, &t, 0, 1), Err(FeatureError::InvalidWindow { .. })));
    }

    #[test]
    fn window_target_interpolates_in_throughput() {
        let mut f = frame_from(&[[1.0, 0.0, 0.0]; 4]);
        for (k, r) in f.rows.iter_mut().enumerate() {
            r.cumulative_discharge_ah = [0.0, 20.0, 35.0, 50.0][k];
        }
        let t = [
            RulTarget {
                cumulative_discharge_ah: 0.0,
                remaining_ah: 200.0,
            },
            RulTarget {
                cumulative_discharge_ah: 200.0,
                remaining_ah: 0.0,
            },
        ];
        let w = make_windows(&f, &t, 4, 1).unwrap();
        assert_eq!(w.targets, vec![150.0]);
    }

    #[test]
    fn split_counts() {
        let ids: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
        let s = split_by_cell(&ids, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        assert_eq!(s, split_by_cell(&ids, (0.8, 0.1, 0.1), 3).unwrap());
        let mut all: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
        all.sort();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(all, sorted);

        let three: Vec<String> = ids[..3].to_vec();
        for ratios in [(1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.5, 0.25, 0.25)] {
            let s = split_by_cell(&three, ratios, 1).unwrap();
            assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1, 1, 1));
        }
        assert!(matches!(split_by_cell(&ids[..2], (0.8, 0.1, 0.1), 1), Err(FeatureError::TooFewCells(2))));
        assert!(split_by_cell(&ids, (0.8, 0.1, 0.2), 1).is_err());
    }

    #[test]
    fn window_file_roundtrip() {
        let f = frame_from(&[[3.25, -1.5, 20.0], [3.5, 0.5, 21.0], [3.75, 1.0, 22.0]]);
        let t = [RulTarget {
            cumulative_discharge_ah: 0.0,
            remaining_ah: 8.0,
        }];
        let w = make_windows(&f, &t, 2, 1).unwrap();
        let mut buf = Vec::new();
        write_window_set(&w, &mut buf).unwrap();
        assert_eq!(read_window_set(buf.as_slice()).unwrap(), w);
        buf.truncate(buf.len() - 1);
        assert!(read_window_set(buf.as_slice()).is_err());
    }
}
