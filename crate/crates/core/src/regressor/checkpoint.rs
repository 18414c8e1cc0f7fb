//! Versioned checkpoint container: magic, JSON header, little-endian f32 payload.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layout, ModelConfig, ModelParams, RegressorError, TensorSpec};
use crate::train::BinWeights;

const MAGIC: &[u8; 8] = b"TSCKPT\0\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model_id: String,
    pub config: ModelConfig,
    /// Payload order; offsets are in elements.
    pub tensors: Vec<TensorSpec>,
    pub endianness: String,
    pub dtype: String,
    pub seed: u64,
    #[serde(default)]
    pub bin_weights: Option<BinWeights>,
    #[serde(default)]
    pub provider_id: Option<String>,
    #[serde(default)]
    pub tone_scorer: Option<String>,
    #[serde(default)]
    pub lexicon_sha256: Option<String>,
    pub payload_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams,
}

/// Provenance recorded alongside the parameters.
#[derive(Debug, Clone, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub bin_weights: Option<BinWeights>,
    pub provider_id: Option<String>,
    pub tone_scorer: Option<String>,
    pub lexicon_sha256: Option<String>,
}

fn payload(params: &ModelParams) -> Vec<u8> {
    params.data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, meta: CheckpointMeta) -> Result<CheckpointHeader, RegressorError> {
    let body = payload(params);
    let digest = crate::jsonl::sha256_hex(&body);
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        model_id: format!("{}-{}", params.config.label(), &digest[..12]),
        config: params.config,
        tensors: params.layout.specs.clone(),
        endianness: "little".into(),
        dtype: "f32".into(),
        seed: meta.seed,
        bin_weights: meta.bin_weights,
        provider_id: meta.provider_id,
        tone_scorer: meta.tone_scorer,
        lexicon_sha256: meta.lexicon_sha256,
        payload_sha256: digest,
    };
    let json = serde_json::to_vec(&header).map_err(|e| RegressorError::Checkpoint(e.to_string()))?;
    crate::jsonl::write_atomic(path, |w| {
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        w.write_all(&body)
    })?;
    Ok(header)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, RegressorError> {
    let bytes = std::fs::read(path)?;
    let bad = |m: &str| RegressorError::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let hend = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..hend]).map_err(|e| bad(&e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {}", header.format_version)));
    }
    if header.endianness != "little" || header.dtype != "f32" {
        return Err(bad("unsupported payload encoding"));
    }
    let body = &bytes[hend..];
    if crate::jsonl::sha256_hex(body) != header.payload_sha256 {
        return Err(bad("payload checksum mismatch"));
    }
    header.config.validate()?;
    let layout = Layout::new(&header.config);
    if layout.specs != header.tensors {
        return Err(bad("tensor table does not match the config"));
    }
    if body.len() != 4 * layout.len {
        return Err(bad("payload length does not match the tensor table"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Checkpoint {
        params: ModelParams {
            config: header.config,
            layout,
            data,
        },
        header,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_f32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let p = ModelParams::init(ModelConfig::new(14, 2, true, 0.2), 5).unwrap();
        let h = save_checkpoint(&path, &p, CheckpointMeta { seed: 5, ..Default::default() }).unwrap();
        let c = load_checkpoint(&path).unwrap();
        assert_eq!(c.header, h);
        for (a, b) in p.data.iter().zip(&c.params.data) {
            assert_eq!(*a as f32 as f64, *b);
        }
        // saving the loaded parameters reproduces the file
        let again = dir.path().join("again.ckpt");
        save_checkpoint(&again, &c.params, CheckpointMeta { seed: 5, ..Default::default() }).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn corruption_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let p = ModelParams::init(ModelConfig::new(2, 1, false, 0.0), 5).unwrap();
        save_checkpoint(&path, &p, CheckpointMeta::default()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 1;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(RegressorError::Checkpoint(_))));
    }
}
