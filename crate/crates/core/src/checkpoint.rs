//! Binary checkpoint: `SSRG`, a version byte, a little-endian `u32` header
//! length, a JSON header and the little-endian `f32` weight blobs in manifest
//! order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, SsrganModel};
use crate::real::Real;

pub const MAGIC: &[u8; 4] = b"SSRG";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 3],
    /// Byte offset into the blob section.
    pub offset: usize,
    /// Number of `f32` values.
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: ModelConfig,
    pub norm_scale: f64,
    pub tensors: Vec<TensorEntry>,
}

pub fn to_bytes<F: Real>(model: &SsrganModel<F>) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(model.params.len());
    let mut offset = 0;
    for (_, p) in model.params.iter() {
        let len = p.value.numel();
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.value.shape(),
            offset,
            len,
        });
        offset += 4 * len;
    }
    let header = Header {
        config: model.config.clone(),
        norm_scale: model.norm_scale,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(json.len())
        .map_err(|_| Error::Format("header too large".into()))?;

    let mut out = Vec::with_capacity(9 + json.len() + offset);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in model.params.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes<F: Real>(bytes: &[u8]) -> Result<SsrganModel<F>> {
    let fmt = |m: String| Error::Format(m);
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(fmt("bad magic bytes (expected \"SSRG\")".into()));
    }
    let version = *bytes
        .get(4)
        .ok_or_else(|| fmt("truncated before version byte".into()))?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: VERSION,
        });
    }
    let len_bytes: [u8; 4] = bytes
        .get(5..9)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| fmt("truncated in header length".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let json = bytes
        .get(9..9 + header_len)
        .ok_or_else(|| fmt("truncated in JSON header".into()))?;
    let header: Header =
        serde_json::from_slice(json).map_err(|e| fmt(format!("invalid JSON header: {e}")))?;
    let blobs = &bytes[9 + header_len..];

    let mut model = SsrganModel::<F>::build_uninit(header.config)?;
    model.norm_scale = header.norm_scale;
    if header.tensors.len() != model.params.len() {
        return Err(fmt(format!(
            "manifest lists {} tensors, model has {}",
            header.tensors.len(),
            model.params.len()
        )));
    }
    let ids: Vec<_> = model.params.ids().collect();
    for (id, entry) in ids.into_iter().zip(&header.tensors) {
        let p = model.params.get_mut(id);
        if p.name != entry.name || p.value.shape() != entry.shape || p.value.numel() != entry.len {
            return Err(fmt(format!(
                "tensor {}: manifest does not match model layout",
                entry.name
            )));
        }
        let raw = blobs
            .get(entry.offset..entry.offset + 4 * entry.len)
            .ok_or_else(|| fmt(format!("truncated in tensor {}", entry.name)))?;
        for (dst, chunk) in p.value.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
            *dst = F::from_f64_lossy(v as f64);
        }
    }
    Ok(model)
}

pub fn save_checkpoint<F: Real>(model: &SsrganModel<F>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load_checkpoint<F: Real>(path: impl AsRef<Path>) -> Result<SsrganModel<F>> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> SsrganModel<f32> {
        let mut m = SsrganModel::build(ModelConfig {
            seed: 4,
            ..ModelConfig::small()
        })
        .unwrap();
        m.norm_scale = 3.25;
        m
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = model();
        let bytes = to_bytes(&m).unwrap();
        let back: SsrganModel<f32> = from_bytes(&bytes).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.norm_scale.to_bits(), m.norm_scale.to_bits());
        for ((_, a), (_, b)) in m.params.iter().zip(back.params.iter()) {
            assert_eq!(a.name, b.name);
            let ab: Vec<u32> = a.value.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let bytes = to_bytes(&model()).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        let err = from_bytes::<f32>(&bad).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("magic")));

        let mut bad = bytes.clone();
        bad[4] = VERSION + 1;
        assert!(matches!(
            from_bytes::<f32>(&bad).unwrap_err(),
            Error::UnsupportedVersion { found: 2, expected: 1 }
        ));

        let err = from_bytes::<f32>(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("truncated in tensor")));
        let err = from_bytes::<f32>(&bytes[..20]).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("header")));
    }
}
