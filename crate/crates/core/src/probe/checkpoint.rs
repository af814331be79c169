//! Probe checkpoints: magic `PLRB`, JSON header, then `B` and the
//! prototypes as row-major little-endian `f32`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use super::PolarProbe;
use crate::acts::{decode_container, encode_container};
use crate::error::{Error, Result};
use crate::graph::Domain;
use crate::io::atomic_write;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PLRB";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub k: usize,
    pub d: usize,
    pub t: usize,
    pub domain: Domain,
    pub layer: i64,
    pub config: TrainConfig,
    /// Directional relation type of each prototype column.
    pub relation_types: Vec<String>,
}

fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f32> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| m[(r, c)] as f32))
}

pub fn encode_checkpoint(probe: &PolarProbe, domain: Domain, layer: i64, config: &TrainConfig, relation_types: &[String]) -> Result<Vec<u8>> {
    if relation_types.len() != probe.t() {
        return Err(Error::DimensionMismatch {
            context: "relation type names vs prototypes".into(),
            expected: probe.t(),
            found: relation_types.len(),
        });
    }
    let header = CheckpointHeader {
        k: probe.k(),
        d: probe.d(),
        t: probe.t(),
        domain,
        layer,
        config: config.clone(),
        relation_types: relation_types.to_vec(),
    };
    let payload: Vec<f32> = row_major(&probe.b).chain(row_major(&probe.prototypes)).collect();
    encode_container(CHECKPOINT_MAGIC, &header, &payload)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(PolarProbe, CheckpointHeader)> {
    let (header, payload): (CheckpointHeader, Vec<f32>) = decode_container(CHECKPOINT_MAGIC, bytes)?;
    let (k, d, t) = (header.k, header.d, header.t);
    let expected = k * d + k * t;
    if payload.len() != expected {
        return Err(if payload.len() < expected {
            Error::Truncated(format!("checkpoint payload holds {} floats, header implies {expected}", payload.len()))
        } else {
            Error::DimensionMismatch {
                context: "checkpoint payload length".into(),
                expected,
                found: payload.len(),
            }
        });
    }
    let widen = |x: &f32| *x as f64;
    let b = DMatrix::from_row_iterator(k, d, payload[..k * d].iter().map(widen));
    let p = DMatrix::from_row_iterator(k, t, payload[k * d..].iter().map(widen));
    Ok((PolarProbe::new(b, p)?, header))
}

pub fn write_checkpoint(path: &Path, probe: &PolarProbe, domain: Domain, layer: i64, config: &TrainConfig, relation_types: &[String]) -> Result<()> {
    atomic_write(path, &encode_checkpoint(probe, domain, layer, config, relation_types)?)
}

pub fn read_checkpoint(path: &Path) -> Result<(PolarProbe, CheckpointHeader)> {
    decode_checkpoint(&std::fs::read(path)?)
}
