//! Steering vectors `v = B† p_r`, unit-normalized, and their `PLRS` files.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::acts::{decode_container, encode_container};
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::linalg::pinv;
use crate::probe::PolarProbe;

pub const STEER_MAGIC: &[u8; 4] = b"PLRS";

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringVector {
    pub relation: String,
    /// `+1` or `-1`.
    pub sign: i8,
    /// Unit norm, model width.
    pub v: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub layer: i64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SteerHeader {
    relation: String,
    sign: i8,
    alpha_grid: Vec<f64>,
    layer: i64,
    d: usize,
}

/// `relation_types` names the probe's prototype columns.
pub fn steering_vector(
    probe: &PolarProbe,
    relation_types: &[String],
    relation: &str,
    sign: i8,
    alpha_grid: &[f64],
    layer: i64,
) -> Result<SteeringVector> {
    if sign != 1 && sign != -1 {
        return Err(Error::Config(format!("steering sign must be +1 or -1, got {sign}")));
    }
    let c = relation_types
        .iter()
        .position(|r| r == relation)
        .ok_or_else(|| Error::Config(format!("{relation:?} is not a directional relation of this probe ({relation_types:?})")))?;
    let p: DVector<f64> = probe.prototypes.column(c).into_owned();
    let v = pinv(&probe.b) * &p;
    // B v is the projection of p onto the row space image; near zero means
    // p lies in the null space of B†.
    if (&probe.b * &v).norm() <= 1e-8 * p.norm() {
        return Err(Error::Degenerate(format!("prototype of {relation:?} maps to a near-zero model-space vector")));
    }
    let norm = v.norm();
    Ok(SteeringVector {
        relation: relation.to_string(),
        sign,
        v: v.iter().map(|x| x / norm).collect(),
        alpha_grid: alpha_grid.to_vec(),
        layer,
    })
}

pub fn encode_steering(s: &SteeringVector) -> Result<Vec<u8>> {
    let header = SteerHeader {
        relation: s.relation.clone(),
        sign: s.sign,
        alpha_grid: s.alpha_grid.clone(),
        layer: s.layer,
        d: s.v.len(),
    };
    let payload: Vec<f32> = s.v.iter().map(|&x| x as f32).collect();
    encode_container(STEER_MAGIC, &header, &payload)
}

pub fn decode_steering(bytes: &[u8]) -> Result<SteeringVector> {
    let (h, payload): (SteerHeader, Vec<f32>) = decode_container(STEER_MAGIC, bytes)?;
    if payload.len() != h.d {
        return Err(Error::DimensionMismatch {
            context: "steering vector length".into(),
            expected: h.d,
            found: payload.len(),
        });
    }
    Ok(SteeringVector {
        relation: h.relation,
        sign: h.sign,
        v: payload.iter().map(|&x| x as f64).collect(),
        alpha_grid: h.alpha_grid,
        layer: h.layer,
    })
}

pub fn write_steering(path: &Path, s: &SteeringVector) -> Result<()> {
    atomic_write(path, &encode_steering(s)?)
}

pub fn read_steering(path: &Path) -> Result<SteeringVector> {
    decode_steering(&std::fs::read(path)?)
}
