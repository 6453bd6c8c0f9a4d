//! The `.sedw` weight archive: a JSON manifest (parameter names, shapes,
//! trainable flags, config fingerprint) followed by raw f32 payloads.
//!
//! Loading refuses archives whose config fingerprint does not match the
//! receiving model, printing both fingerprints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sednet_core::model::{Model, ModelConfig};
use sednet_core::tensor::Tensor;

use crate::error::{IoError, Result};
use crate::volume_file::write_atomic;

const MAGIC: &[u8; 7] = b"SEDWGT\0";
const VERSION: u8 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsManifest {
    pub fingerprint: String,
    pub config: ModelConfig,
    pub params: Vec<ParamEntry>,
}

/// A parsed archive, ready to be applied to a compatible model.
#[derive(Debug)]
pub struct WeightArchive {
    pub manifest: WeightsManifest,
    payloads: Vec<Vec<f32>>,
}

/// FNV-1a over the architecture-determining config fields. The init seed is
/// deliberately excluded: loaded weights replace initialization wholesale,
/// so it cannot cause a shape mismatch.
pub fn config_fingerprint(config: &ModelConfig) -> String {
    let canonical = serde_json::json!({
        "input": [config.input_height, config.input_width, config.input_channels],
        "output": config.output_channels,
        "encoder": config.encoder,
        "bottleneck": config.bottleneck,
        "decoder": config.decoder,
        "pool": [config.pool_window, config.pool_stride],
    });
    let json = canonical.to_string();
    let mut hash = 0xcbf29ce484222325u64;
    for b in json.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

pub fn save_weights(path: &Path, model: &Model<f32>) -> Result<()> {
    let manifest = WeightsManifest {
        fingerprint: config_fingerprint(model.config()),
        config: model.config().clone(),
        params: model
            .params()
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                trainable: p.trainable,
            })
            .collect(),
    };
    let manifest_json = serde_json::to_vec(&manifest)?;

    let payload_len: usize = model.params().iter().map(|p| p.value.numel() * 4).sum();
    let mut bytes = Vec::with_capacity(12 + manifest_json.len() + payload_len);
    bytes.extend_from_slice(MAGIC);
    bytes.push(VERSION);
    bytes.extend_from_slice(&(manifest_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&manifest_json);
    for p in model.params() {
        for &v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}

pub fn load_archive(path: &Path) -> Result<WeightArchive> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 {
        return Err(IoError::Format(format!(
            "{}: file too short for magic and manifest length",
            path.display()
        )));
    }
    if &bytes[..7] != MAGIC {
        return Err(IoError::Format(format!(
            "{}: bad magic at offset 0, not a weight archive",
            path.display()
        )));
    }
    if bytes[7] != VERSION {
        return Err(IoError::Version {
            expected: VERSION,
            found: bytes[7],
        });
    }
    let manifest_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload_start = 12 + manifest_len;
    if bytes.len() < payload_start {
        return Err(IoError::Format(format!(
            "{}: manifest claims {manifest_len} bytes but file ends at {}",
            path.display(),
            bytes.len()
        )));
    }
    let manifest: WeightsManifest = serde_json::from_slice(&bytes[12..payload_start])
        .map_err(|e| IoError::Format(format!("{}: manifest json: {e}", path.display())))?;

    let expected: usize = manifest
        .params
        .iter()
        .map(|p| p.shape.iter().product::<usize>() * 4)
        .sum();
    let actual = bytes.len() - payload_start;
    if actual != expected {
        return Err(IoError::Format(format!(
            "{}: payload expected {expected} bytes after offset {payload_start}, found {actual}",
            path.display()
        )));
    }

    let mut payloads = Vec::with_capacity(manifest.params.len());
    let mut cursor = payload_start;
    for entry in &manifest.params {
        let n: usize = entry.shape.iter().product();
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            let at = cursor + i * 4;
            values.push(f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()));
        }
        cursor += n * 4;
        payloads.push(values);
    }
    Ok(WeightArchive { manifest, payloads })
}

impl WeightArchive {
    /// Build a fresh model from the archived config and load the weights
    /// into it.
    pub fn instantiate(&self) -> Result<Model<f32>> {
        let mut model = Model::build(self.manifest.config.clone())?;
        self.apply_to(&mut model)?;
        Ok(model)
    }

    /// Restore values and trainable flags into a compatible model.
    pub fn apply_to(&self, model: &mut Model<f32>) -> Result<()> {
        let model_fp = config_fingerprint(model.config());
        if model_fp != self.manifest.fingerprint {
            return Err(IoError::Format(format!(
                "config fingerprint mismatch: archive {} vs model {model_fp}",
                self.manifest.fingerprint
            )));
        }
        if self.manifest.params.len() != model.params().len() {
            return Err(IoError::Format(format!(
                "archive has {} parameters, model has {}",
                self.manifest.params.len(),
                model.params().len()
            )));
        }
        for ((param, entry), payload) in model
            .params_mut()
            .iter_mut()
            .zip(&self.manifest.params)
            .zip(&self.payloads)
        {
            if param.name != entry.name || param.value.shape() != entry.shape {
                return Err(IoError::Format(format!(
                    "archive parameter {} {:?} does not match model parameter {} {:?}",
                    entry.name,
                    entry.shape,
                    param.name,
                    param.value.shape()
                )));
            }
            param.value = Tensor::new(entry.shape.clone(), payload.clone())?;
            param.trainable = entry.trainable;
        }
        Ok(())
    }
}

/// Load an archive and apply it to `model` in one step.
pub fn load_weights(path: &Path, model: &mut Model<f32>) -> Result<()> {
    load_archive(path)?.apply_to(model)
}
