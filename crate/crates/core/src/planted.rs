//! Synthetic activations with a known polar code.
//!
//! A planted space fixes a `d × k*` mixing with orthonormal columns and an
//! offset shared by every graph of a run. Each graph contributes lattice
//! coordinates in which every edge `(i, j, r)` is the unit step `e_r`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::acts::ActivationRecord;
use crate::error::{Error, Result};
use crate::graph::{grid_coordinates, RelationalGraph};

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Column-major fill keeps the draw order fixed.
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Shared embedding of the planted space into activation space.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedSpace {
    /// `d × k*`, orthonormal columns.
    pub mixing: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub noise_sigma: f64,
}

impl PlantedSpace {
    /// Random orthonormal mixing (QR of a Gaussian matrix) and a Gaussian offset.
    pub fn random<R: Rng + ?Sized>(d: usize, k_star: usize, noise_sigma: f64, rng: &mut R) -> Result<Self> {
        Self::check(d, k_star, noise_sigma)?;
        let q = gaussian_matrix(d, k_star, rng).qr().q();
        let offset = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        Ok(PlantedSpace {
            mixing: q.columns(0, k_star).into_owned(),
            offset,
            noise_sigma,
        })
    }

    /// Mixing equal to the first `k*` columns of the identity, zero offset.
    pub fn truncated_identity(d: usize, k_star: usize, noise_sigma: f64) -> Result<Self> {
        Self::check(d, k_star, noise_sigma)?;
        Ok(PlantedSpace {
            mixing: DMatrix::identity(d, k_star),
            offset: DVector::zeros(d),
            noise_sigma,
        })
    }

    fn check(d: usize, k_star: usize, noise_sigma: f64) -> Result<()> {
        if k_star == 0 || k_star > d {
            return Err(Error::Config(format!("planted dimension {k_star} must lie in 1..={d}")));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be finite and non-negative, got {noise_sigma}")));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.mixing.nrows()
    }

    pub fn k_star(&self) -> usize {
        self.mixing.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedLayout {
    /// `n × k*`.
    pub coords: DMatrix<f64>,
    /// `k* × t`, unit columns.
    pub planted_prototypes: DMatrix<f64>,
    pub mixing: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub noise_sigma: f64,
}

impl PlantedLayout {
    /// Lattice coordinates of a grid-domain graph; axis `r` carries relation type `r`.
    pub fn for_graph(graph: &RelationalGraph, space: &PlantedSpace) -> Result<Self> {
        if !graph.domain().is_euclidean() {
            return Err(Error::UnsupportedDomain(graph.domain()));
        }
        let k_star = graph.t();
        if k_star != space.k_star() {
            return Err(Error::DimensionMismatch {
                context: "planted dimension vs relation types".into(),
                expected: space.k_star(),
                found: k_star,
            });
        }
        let lattice = grid_coordinates(graph)
            .ok_or_else(|| Error::InvalidGraph("graph has no grid embedding".into()))?;
        let coords = DMatrix::from_fn(graph.n(), k_star, |i, a| lattice[i][a] as f64);
        Ok(PlantedLayout {
            coords,
            planted_prototypes: DMatrix::identity(k_star, k_star),
            mixing: space.mixing.clone(),
            offset: space.offset.clone(),
            noise_sigma: space.noise_sigma,
        })
    }
}

/// `h_i = mixing · coords_i + offset + ε_i` with `ε_i ~ N(0, σ² I)`.
pub fn plant_embeddings<R: Rng + ?Sized>(
    sample_id: &str,
    layer: i64,
    graph: &RelationalGraph,
    layout: &PlantedLayout,
    rng: &mut R,
) -> Result<ActivationRecord> {
    if !graph.domain().is_euclidean() {
        return Err(Error::UnsupportedDomain(graph.domain()));
    }
    let n = graph.n();
    if layout.coords.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "planted coordinates vs entities".into(),
            expected: n,
            found: layout.coords.nrows(),
        });
    }
    let d = layout.mixing.nrows();
    let clean = &layout.coords * layout.mixing.transpose();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        for c in 0..d {
            let noise: f64 = if layout.noise_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                layout.noise_sigma * z
            } else {
                0.0
            };
            data.push((clean[(i, c)] + layout.offset[c] + noise) as f32);
        }
    }
    ActivationRecord::new(sample_id, layer, n, d, data)
}

/// I.i.d. standard Gaussian rows, the chance-level control.
pub fn random_embeddings<R: Rng + ?Sized>(
    sample_id: &str,
    layer: i64,
    graph: &RelationalGraph,
    d: usize,
    rng: &mut R,
) -> Result<ActivationRecord> {
    let n = graph.n();
    let data = (0..n * d).map(|_| StandardNormal.sample(rng)).map(|x: f64| x as f32).collect();
    ActivationRecord::new(sample_id, layer, n, d, data)
}
