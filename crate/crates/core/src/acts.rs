//! The `.acts` activation container and the shared binary layout used by
//! probe checkpoints and steering files.
//!
//! Layout: 4-byte magic, version `u32` LE, metadata length `u64` LE, UTF-8
//! JSON metadata, then a contiguous little-endian `f32` payload.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic_write;

pub const ACTS_MAGIC: &[u8; 4] = b"PLRP";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub(crate) fn encode_container<M: Serialize>(magic: &[u8; 4], meta: &M, payload: &[f32]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(meta)?;
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + 4 * payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for x in payload {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

/// Returns the metadata and the payload as floats.
pub(crate) fn decode_container<M: DeserializeOwned>(magic: &[u8; 4], bytes: &[u8]) -> Result<(M, Vec<f32>)> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        let found = &bytes[..bytes.len().min(4)];
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let meta_end = (HEADER_LEN as u64)
        .checked_add(meta_len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| Error::Truncated(format!("metadata of {meta_len} bytes runs past end of file")))?
        as usize;
    let meta = serde_json::from_slice(&bytes[HEADER_LEN..meta_end])?;
    let body = &bytes[meta_end..];
    if body.len() % 4 != 0 {
        return Err(Error::Truncated(format!("payload length {} is not a whole number of f32s", body.len())));
    }
    let payload = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((meta, payload))
}

/// Per-entity activations for one described sample; rows follow the
/// graph's canonical entity order.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationRecord {
    pub sample_id: String,
    pub layer: i64,
    pub n: usize,
    pub d: usize,
    /// Row-major `n × d`.
    pub data: Vec<f32>,
}

impl ActivationRecord {
    pub fn new(sample_id: impl Into<String>, layer: i64, n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                context: "activation matrix length".into(),
                expected: n * d,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Degenerate("activation matrix holds non-finite values".into()));
        }
        Ok(ActivationRecord {
            sample_id: sample_id.into(),
            layer,
            n,
            d,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleIndex {
    pub sample_id: String,
    pub n: usize,
    /// Offset into the payload, in bytes.
    pub byte_offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActsMetadata {
    pub model: String,
    pub layer: i64,
    pub d: usize,
    pub dtype: String,
    pub samples: Vec<SampleIndex>,
    /// Anything else the writer recorded, such as the residual position variant.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActsFile {
    pub metadata: ActsMetadata,
    pub records: Vec<ActivationRecord>,
}

impl ActsFile {
    pub fn get(&self, sample_id: &str) -> Option<&ActivationRecord> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    pub fn by_sample_id(&self) -> std::collections::HashMap<&str, &ActivationRecord> {
        self.records.iter().map(|r| (r.sample_id.as_str(), r)).collect()
    }
}

pub fn encode_acts(
    model: &str,
    layer: i64,
    d: usize,
    records: &[ActivationRecord],
    extra: serde_json::Map<String, serde_json::Value>,
) -> Result<Vec<u8>> {
    let mut samples = Vec::with_capacity(records.len());
    let mut payload = Vec::with_capacity(records.iter().map(|r| r.data.len()).sum());
    for r in records {
        if r.d != d {
            return Err(Error::DimensionMismatch {
                context: format!("width of sample {}", r.sample_id),
                expected: d,
                found: r.d,
            });
        }
        samples.push(SampleIndex {
            sample_id: r.sample_id.clone(),
            n: r.n,
            byte_offset: 4 * payload.len() as u64,
        });
        payload.extend_from_slice(&r.data);
    }
    let meta = ActsMetadata {
        model: model.to_string(),
        layer,
        d,
        dtype: "f32le".into(),
        samples,
        extra,
    };
    encode_container(ACTS_MAGIC, &meta, &payload)
}

pub fn decode_acts(bytes: &[u8]) -> Result<ActsFile> {
    let (metadata, payload): (ActsMetadata, Vec<f32>) = decode_container(ACTS_MAGIC, bytes)?;
    if metadata.dtype != "f32le" {
        return Err(Error::Config(format!("unsupported dtype {:?}", metadata.dtype)));
    }
    let d = metadata.d;
    let mut records = Vec::with_capacity(metadata.samples.len());
    let mut expected_offset = 0u64;
    for s in &metadata.samples {
        if s.byte_offset != expected_offset {
            return Err(Error::DimensionMismatch {
                context: format!("byte offset of sample {}", s.sample_id),
                expected: expected_offset as usize,
                found: s.byte_offset as usize,
            });
        }
        let start = (s.byte_offset / 4) as usize;
        let end = start + s.n * d;
        if end > payload.len() {
            return Err(Error::Truncated(format!(
                "sample {} needs floats {start}..{end}, payload holds {}",
                s.sample_id,
                payload.len()
            )));
        }
        records.push(ActivationRecord::new(
            s.sample_id.clone(),
            metadata.layer,
            s.n,
            d,
            payload[start..end].to_vec(),
        )?);
        expected_offset = 4 * end as u64;
    }
    if expected_offset != 4 * payload.len() as u64 {
        return Err(Error::DimensionMismatch {
            context: "payload length vs header".into(),
            expected: expected_offset as usize,
            found: 4 * payload.len(),
        });
    }
    Ok(ActsFile { metadata, records })
}

pub fn write_acts(
    path: &Path,
    model: &str,
    layer: i64,
    d: usize,
    records: &[ActivationRecord],
    extra: serde_json::Map<String, serde_json::Value>,
) -> Result<()> {
    atomic_write(path, &encode_acts(model, layer, d, records, extra)?)
}

pub fn read_acts(path: &Path) -> Result<ActsFile> {
    decode_acts(&std::fs::read(path)?)
}
