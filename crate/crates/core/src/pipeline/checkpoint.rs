//! Binary checkpoint: 8-byte magic, `u32` format version, `u64` header length, a UTF-8 JSON
//! header (training config, normalization statistics, parameter manifest), then the raw
//! little-endian parameter arrays in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HybridModel, ModelParams};
use crate::numerics::{ParamLayout, Real};
use crate::pipeline::norm::NormStats;
use crate::pipeline::train::{Precision, Predictor, TrainConfig};
use crate::transolver::ModelConfig;

pub const MAGIC: &[u8; 8] = b"TRDNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset within the data section.
    offset: usize,
    nbytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    dtype: String,
    config: TrainConfig,
    stats: NormStats,
    tensors: Vec<TensorEntry>,
}

/// Parameters in whichever precision they were trained.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyParams {
    F32(ModelParams<f32>),
    F64(ModelParams<f64>),
}

impl AnyParams {
    pub fn layout(&self) -> &ParamLayout {
        match self {
            AnyParams::F32(p) => &p.layout,
            AnyParams::F64(p) => &p.layout,
        }
    }

    pub fn precision(&self) -> Precision {
        match self {
            AnyParams::F32(_) => Precision::F32,
            AnyParams::F64(_) => Precision::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub stats: NormStats,
    pub params: AnyParams,
}

impl Checkpoint {
    /// Fails with a shape error unless the stored parameters fit `model`.
    pub fn ensure_model(&self, model: &ModelConfig) -> Result<()> {
        let expected = HybridModel::new(model)?.layout;
        let found = self.params.layout();
        let shapes = |l: &ParamLayout| -> Vec<usize> {
            l.specs().iter().flat_map(|s| s.shape.clone()).collect()
        };
        let names_match = expected.specs().len() == found.specs().len()
            && expected
                .specs()
                .iter()
                .zip(found.specs())
                .all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if !names_match {
            return Err(Error::shape(
                "checkpoint parameters vs model config",
                &shapes(&expected),
                &shapes(found),
            ));
        }
        Ok(())
    }

    pub fn predictor<T: Real>(&self) -> Result<Predictor<T>> {
        let model = HybridModel::new(&self.config.model)?;
        let params = match &self.params {
            AnyParams::F32(p) => p.cast::<T>(),
            AnyParams::F64(p) => p.cast::<T>(),
        };
        Predictor::new(model, params, self.stats.clone())
    }
}

pub fn encode_checkpoint<T: Real>(
    params: &ModelParams<T>,
    stats: &NormStats,
    config: &TrainConfig,
) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(params.layout.specs().len());
    for spec in params.layout.specs() {
        tensors.push(TensorEntry {
            name: spec.name.clone(),
            shape: spec.shape.clone(),
            offset: spec.offset * T::BYTES,
            nbytes: spec.len() * T::BYTES,
        });
    }
    let header = Header {
        dtype: T::DTYPE.to_string(),
        config: config.clone(),
        stats: stats.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header)
        .map_err(|e| Error::invalid(format!("serializing checkpoint header: {e}")))?;
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + params.len() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for &v in &params.values {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn save_checkpoint<T: Real>(
    path: &Path,
    params: &ModelParams<T>,
    stats: &NormStats,
    config: &TrainConfig,
) -> Result<()> {
    let bytes = encode_checkpoint(params, stats, config)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn decode_values<T: Real>(data: &[u8], layout: ParamLayout) -> ModelParams<T> {
    let values = data.chunks_exact(T::BYTES).map(T::read_le).collect();
    ModelParams { layout, values }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let corrupt = |r: &str| Error::corrupt(path, r);
    if bytes.len() < PREAMBLE {
        return Err(corrupt("file shorter than the checkpoint preamble"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let data_start = PREAMBLE
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("header extends past end of file"))?;
    let header: Header = serde_json::from_slice(&bytes[PREAMBLE..data_start])
        .map_err(|e| corrupt(&format!("invalid header: {e}")))?;
    let elem = match header.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(corrupt(&format!("unknown dtype {other:?}"))),
    };

    // Rebuild the layout from the stored config and require the manifest to match it.
    header
        .config
        .model
        .validate()
        .map_err(|e| corrupt(&e.to_string()))?;
    let layout = HybridModel::new(&header.config.model)?.layout;
    let data = &bytes[data_start..];
    let expected_bytes = layout.total_len() * elem;
    if header.tensors.len() != layout.specs().len() {
        return Err(Error::shape(
            "checkpoint tensor count",
            &[layout.specs().len()],
            &[header.tensors.len()],
        ));
    }
    for (entry, spec) in header.tensors.iter().zip(layout.specs()) {
        if entry.name != spec.name || entry.shape != spec.shape {
            return Err(Error::shape("checkpoint tensor", &spec.shape, &entry.shape));
        }
        if entry.offset != spec.offset * elem || entry.nbytes != spec.len() * elem {
            return Err(corrupt(&format!(
                "tensor {} has inconsistent offsets",
                entry.name
            )));
        }
    }
    if data.len() != expected_bytes {
        return Err(corrupt(&format!(
            "data section has {} bytes, manifest needs {expected_bytes}",
            data.len()
        )));
    }
    let params = match elem {
        4 => AnyParams::F32(decode_values(data, layout)),
        _ => AnyParams::F64(decode_values(data, layout)),
    };
    let ok = match &params {
        AnyParams::F32(p) => p.values.iter().all(|v| v.is_finite()),
        AnyParams::F64(p) => p.values.iter().all(|v| v.is_finite()),
    };
    if !ok {
        return Err(corrupt("non-finite parameter values"));
    }
    Ok(Checkpoint {
        config: header.config,
        stats: header.stats,
        params,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
