//! Single-file checkpoint:
//!
//! ```text
//! "RKCP" | version u8 | precision u8 | header_len u32 LE | JSON header
//!        | value_count u64 LE | parameters (LE f64 or f32) | SHA-256 of all prior bytes
//! ```
//!
//! Parameters are stored autoencoder first, then LSTM, then head, each in
//! its `Parameterized` order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelBundle, PipelineError, RulModel, TrainConfig};
use crate::features::{NormStats, SplitSpec};
use crate::neural::{Activation, AutoencoderParams, Dense, LstmParams, Parameterized};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RKCP";
pub const FORMAT_VERSION: u8 = 1;
const DIGEST_LEN: usize = 32;
const PREFIX_LEN: usize = 4 + 1 + 1 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    fn code(self) -> u8 {
        match self {
            Precision::F64 => 0,
            Precision::F32 => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Precision::F64),
            1 => Some(Precision::F32),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F64 => 8,
            Precision::F32 => 4,
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f64" => Ok(Precision::F64),
            "f32" => Ok(Precision::F32),
            other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerShape {
    input: usize,
    output: usize,
    activation: Activation,
}

impl LayerShape {
    fn of(d: &Dense) -> Self {
        Self {
            input: d.input_size(),
            output: d.output_size(),
            activation: d.activation,
        }
    }

    fn build(&self) -> Dense {
        Dense::zeros(self.input, self.output, self.activation)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    library_version: String,
    precision: Precision,
    encoder: Vec<LayerShape>,
    decoder: Vec<LayerShape>,
    lstm_input_size: usize,
    lstm_hidden_size: usize,
    head: LayerShape,
    param_count: usize,
    norm: NormStats,
    config: TrainConfig,
    split: SplitSpec,
    train_mean_remaining_ah: f64,
}

fn all_params(bundle: &ModelBundle) -> Vec<f64> {
    let mut flat = bundle.autoencoder.flatten();
    flat.extend(bundle.model.flatten());
    flat
}

pub fn save_bundle<W: Write>(bundle: &ModelBundle, mut sink: W, precision: Precision) -> Result<(), PipelineError> {
    bundle.check_consistency()?;
    let values = all_params(bundle);
    let header = Header {
        library_version: bundle.version.clone(),
        precision,
        encoder: bundle.autoencoder.encoder.iter().map(LayerShape::of).collect(),
        decoder: bundle.autoencoder.decoder.iter().map(LayerShape::of).collect(),
        lstm_input_size: bundle.model.lstm.input_size(),
        lstm_hidden_size: bundle.model.lstm.hidden_size(),
        head: LayerShape::of(&bundle.model.head),
        param_count: values.len(),
        norm: bundle.norm.clone(),
        config: bundle.config.clone(),
        split: bundle.split.clone(),
        train_mean_remaining_ah: bundle.train_mean_remaining_ah,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(PREFIX_LEN + json.len() + 8 + values.len() * precision.width() + DIGEST_LEN);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.push(FORMAT_VERSION);
    buf.push(precision.code());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in &values {
        match precision {
            Precision::F64 => buf.extend_from_slice(&v.to_le_bytes()),
            Precision::F32 => buf.extend_from_slice(&(*v as f32).to_le_bytes()),
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> PipelineError {
    PipelineError::CorruptCheckpoint(msg.into())
}

pub fn load_bundle<R: Read>(mut source: R) -> Result<ModelBundle, PipelineError> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    if buf.len() < 5 || &buf[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt("missing checkpoint magic"));
    }
    if buf[4] != FORMAT_VERSION {
        return Err(PipelineError::VersionMismatch {
            found: buf[4],
            supported: FORMAT_VERSION,
        });
    }
    if buf.len() < PREFIX_LEN + 8 + DIGEST_LEN {
        return Err(corrupt("file too short"));
    }
    let (body, digest) = buf.split_at(buf.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let precision = Precision::from_code(body[5]).ok_or_else(|| corrupt(format!("unknown precision code {}", body[5])))?;
    let header_len = u32::from_le_bytes(body[6..10].try_into().expect("4 bytes")) as usize;
    let header_end = PREFIX_LEN
        .checked_add(header_len)
        .filter(|&e| e + 8 <= body.len())
        .ok_or_else(|| corrupt("header length out of range"))?;
    let header: Header =
        serde_json::from_slice(&body[PREFIX_LEN..header_end]).map_err(|e| corrupt(format!("bad header: {e}")))?;
    if header.precision != precision {
        return Err(corrupt("precision byte disagrees with header"));
    }
    let count = u64::from_le_bytes(body[header_end..header_end + 8].try_into().expect("8 bytes")) as usize;
    let payload = &body[header_end + 8..];
    if count != header.param_count || payload.len() != count * precision.width() {
        return Err(corrupt("payload length mismatch"));
    }
    let values: Vec<f64> = match precision {
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(corrupt("non-finite parameter"));
    }

    let mut autoencoder = AutoencoderParams {
        encoder: header.encoder.iter().map(LayerShape::build).collect(),
        decoder: header.decoder.iter().map(LayerShape::build).collect(),
    };
    if autoencoder.encoder.is_empty() || autoencoder.decoder.is_empty() {
        return Err(corrupt("empty autoencoder"));
    }
    let mut model = RulModel {
        lstm: LstmParams::zeros(header.lstm_input_size, header.lstm_hidden_size),
        head: header.head.build(),
    };
    let n_ae = autoencoder.num_params();
    if n_ae + model.num_params() != values.len() {
        return Err(corrupt("parameter count does not match layer shapes"));
    }
    autoencoder.load_flat(&values[..n_ae])?;
    model.load_flat(&values[n_ae..])?;
    let bundle = ModelBundle {
        autoencoder,
        model,
        norm: header.norm,
        config: header.config,
        split: header.split,
        train_mean_remaining_ah: header.train_mean_remaining_ah,
        version: header.library_version,
    };
    bundle.check_consistency().map_err(|e| corrupt(e.to_string()))?;
    Ok(bundle)
}
