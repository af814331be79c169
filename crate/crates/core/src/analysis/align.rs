//! Subspace alignment between probes: mean squared cosine of the principal
//! angles between the model-space images `B† P` of their prototypes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, pinv};
use crate::probe::PolarProbe;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub score: f64,
    pub rank_a: usize,
    pub rank_b: usize,
    /// Either image had fewer independent columns than prototypes.
    pub deficient: bool,
}

/// `d × t` model-space prototype directions `B† P`.
pub fn model_space_prototypes(probe: &PolarProbe) -> DMatrix<f64> {
    pinv(&probe.b) * &probe.prototypes
}

/// Alignment of two column spans: `‖Q_aᵀ Q_b‖²_F / min(rank_a, rank_b)`.
pub fn span_alignment(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Alignment> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            context: "model width of aligned subspaces".into(),
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let (ra, rb) = (qa.ncols(), qb.ncols());
    if ra == 0 || rb == 0 {
        return Err(Error::Degenerate("a prototype image is the zero subspace".into()));
    }
    let m = qa.transpose() * qb;
    let score = (m.norm_squared() / ra.min(rb) as f64).clamp(0.0, 1.0);
    Ok(Alignment {
        score,
        rank_a: ra,
        rank_b: rb,
        deficient: ra < a.ncols() || rb < b.ncols(),
    })
}

pub fn subspace_alignment(a: &PolarProbe, b: &PolarProbe) -> Result<Alignment> {
    if a.d() != b.d() {
        return Err(Error::DimensionMismatch {
            context: "activation width of aligned probes".into(),
            expected: a.d(),
            found: b.d(),
        });
    }
    span_alignment(&model_space_prototypes(a), &model_space_prototypes(b))
}

/// Pairwise alignment scores.
pub fn alignment_matrix(probes: &[PolarProbe]) -> Result<Vec<Vec<f64>>> {
    let images: Vec<DMatrix<f64>> = probes.iter().map(model_space_prototypes).collect();
    let mut out = vec![vec![0.0; probes.len()]; probes.len()];
    for i in 0..probes.len() {
        for j in i..probes.len() {
            let s = span_alignment(&images[i], &images[j])?.score;
            out[i][j] = s;
            out[j][i] = s;
        }
    }
    Ok(out)
}
