//! The polar probe: a rank-`k` linear map `B` and one prototype direction
//! per directional relation type. Distances between mapped entities decode
//! edge existence; cosines between their differences and the prototypes
//! decode edge type.

pub mod checkpoint;
pub mod data;
pub mod loss;
pub mod softrank;
pub mod train;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::acts::ActivationRecord;
use crate::error::{Error, Result};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointHeader};
pub use data::{ProbeData, ProbeGraph, ProbeSample};
pub use loss::{batch_loss, graph_loss, BatchLoss, GraphLoss, GraphTarget};
pub use softrank::{soft_ranks, soft_spearman, soft_spearman_grad, SoftRankConfig, SoftSpearman};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};

/// Cosine denominators are floored here; the cell's gradient is zero when
/// the floor is active.
pub const COSINE_GUARD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct PolarProbe {
    /// `k × d`.
    pub b: DMatrix<f64>,
    /// `k × t`, one column per directional relation type.
    pub prototypes: DMatrix<f64>,
}

impl PolarProbe {
    pub fn new(b: DMatrix<f64>, prototypes: DMatrix<f64>) -> Result<Self> {
        let probe = PolarProbe { b, prototypes };
        probe.check()?;
        Ok(probe)
    }

    fn check(&self) -> Result<()> {
        if self.b.nrows() != self.prototypes.nrows() {
            return Err(Error::DimensionMismatch {
                context: "prototype rows vs probe rank".into(),
                expected: self.b.nrows(),
                found: self.prototypes.nrows(),
            });
        }
        if self.k() == 0 || self.k() > self.d() {
            return Err(Error::Config(format!("probe rank {} must lie in 1..={}", self.k(), self.d())));
        }
        if self.b.iter().chain(self.prototypes.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("probe holds non-finite entries".into()));
        }
        if self.prototypes.column_iter().any(|c| c.norm() == 0.0) {
            return Err(Error::Degenerate("a prototype column is zero".into()));
        }
        Ok(())
    }

    /// `B` with i.i.d. `N(0, 1/d)` entries; unit-norm Gaussian prototypes.
    pub fn init<R: Rng + ?Sized>(k: usize, d: usize, t: usize, rng: &mut R) -> Result<Self> {
        let scale = 1.0 / (d as f64).sqrt();
        let b = DMatrix::from_fn(k, d, |_, _| scale * Distribution::<f64>::sample(&StandardNormal, rng));
        Self::new(b, random_prototypes(k, t, rng))
    }

    /// `B` fixed to the first `k` rows of the identity.
    pub fn truncated_identity<R: Rng + ?Sized>(k: usize, d: usize, t: usize, rng: &mut R) -> Result<Self> {
        Self::new(DMatrix::identity(k, d), random_prototypes(k, t, rng))
    }

    pub fn k(&self) -> usize {
        self.b.nrows()
    }

    pub fn d(&self) -> usize {
        self.b.ncols()
    }

    pub fn t(&self) -> usize {
        self.prototypes.ncols()
    }

    /// Rows `B h_i` for an `n × d` activation matrix.
    pub fn project(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        h * self.b.transpose()
    }

    pub fn forward(&self, record: &ActivationRecord) -> Result<ProbeOutputs> {
        if record.d != self.d() {
            return Err(Error::DimensionMismatch {
                context: format!("activation width of sample {}", record.sample_id),
                expected: self.d(),
                found: record.d,
            });
        }
        Ok(self.forward_matrix(&activation_matrix(record)))
    }

    pub fn forward_matrix(&self, h: &DMatrix<f64>) -> ProbeOutputs {
        ProbeOutputs::new(self.project(h), &self.prototypes)
    }
}

fn random_prototypes<R: Rng + ?Sized>(k: usize, t: usize, rng: &mut R) -> DMatrix<f64> {
    let mut p = DMatrix::from_fn(k, t, |_, _| StandardNormal.sample(rng));
    for mut c in p.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= norm;
        }
    }
    p
}

/// Widens an activation record to an `n × d` matrix.
pub fn activation_matrix(record: &ActivationRecord) -> DMatrix<f64> {
    DMatrix::from_row_iterator(record.n, record.d, record.data.iter().map(|&x| x as f64))
}

/// Guarded cosine similarity.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb).max(COSINE_GUARD)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutputs {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    /// `n × k`, rows `B h_i`.
    pub projected: DMatrix<f64>,
    /// `deltas[(i * n + j) * k ..][..k] = B h_i - B h_j`.
    pub deltas: Vec<f64>,
    pub distances: DMatrix<f64>,
    /// `incidence[(i * n + j) * t + r]`.
    pub incidence: Vec<f64>,
}

impl ProbeOutputs {
    pub fn new(projected: DMatrix<f64>, prototypes: &DMatrix<f64>) -> Self {
        let (n, k) = projected.shape();
        let t = prototypes.ncols();
        let mut deltas = vec![0.0; n * n * k];
        let mut distances = DMatrix::zeros(n, n);
        let mut incidence = vec![0.0; n * n * t];
        let protos: Vec<Vec<f64>> = prototypes.column_iter().map(|c| c.iter().cloned().collect()).collect();
        for i in 0..n {
            for j in 0..n {
                let base = (i * n + j) * k;
                for c in 0..k {
                    deltas[base + c] = projected[(i, c)] - projected[(j, c)];
                }
                let delta = &deltas[base..base + k];
                distances[(i, j)] = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
                for (r, p) in protos.iter().enumerate() {
                    incidence[(i * n + j) * t + r] = cosine(delta, p);
                }
            }
        }
        ProbeOutputs {
            n,
            k,
            t,
            projected,
            deltas,
            distances,
            incidence,
        }
    }

    pub fn delta(&self, i: usize, j: usize) -> &[f64] {
        let base = (i * self.n + j) * self.k;
        &self.deltas[base..base + self.k]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[(i, j)]
    }

    pub fn incidence(&self, i: usize, j: usize, r: usize) -> f64 {
        self.incidence[(i * self.n + j) * self.t + r]
    }

    /// Distances for `i < j`, row by row.
    pub fn upper_distances(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n.saturating_sub(1)) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.distances[(i, j)]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn record(n: usize, d: usize, seed: u64) -> ActivationRecord {
        let mut rng = stream(seed, &[]);
        let data = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).map(|x: f64| x as f32).collect();
        ActivationRecord::new("s", 0, n, d, data).unwrap()
    }

    #[test]
    fn identical_rows_give_zero_distance_and_cosine() {
        let probe = PolarProbe::init(3, 4, 2, &mut stream(1, &[])).unwrap();
        let rec = ActivationRecord::new("s", 0, 2, 4, vec![0.5, -1.0, 2.0, 0.25, 0.5, -1.0, 2.0, 0.25]).unwrap();
        let out = probe.forward(&rec).unwrap();
        assert_eq!(out.distance(0, 1), 0.0);
        assert_eq!(out.incidence(0, 1, 0), 0.0);
        assert_eq!(out.incidence(0, 1, 1), 0.0);
    }

    #[test]
    fn identity_probe_aligned_difference() {
        let p = DMatrix::from_column_slice(3, 1, &[0.0, 2.0, 0.0]);
        let probe = PolarProbe::new(DMatrix::identity(3, 3), p).unwrap();
        let rec = ActivationRecord::new("s", 0, 2, 3, vec![1.0, 3.0, -1.0, 1.0, 1.0, -1.0]).unwrap();
        let out = probe.forward(&rec).unwrap();
        assert!((out.incidence(0, 1, 0) - 1.0).abs() < 1e-12);
        assert!((out.incidence(1, 0, 0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn outputs_are_symmetric_and_antisymmetric() {
        let probe = PolarProbe::init(3, 8, 2, &mut stream(2, &[])).unwrap();
        let out = probe.forward(&record(5, 8, 3)).unwrap();
        for i in 0..5 {
            assert_eq!(out.distance(i, i), 0.0);
            for j in 0..5 {
                assert_eq!(out.distance(i, j), out.distance(j, i));
                for r in 0..2 {
                    assert_eq!(out.incidence(i, j, r), -out.incidence(j, i, r));
                    assert!(out.incidence(i, j, r).abs() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let probe = PolarProbe::init(2, 8, 1, &mut stream(2, &[])).unwrap();
        assert!(matches!(probe.forward(&record(3, 7, 0)), Err(Error::DimensionMismatch { .. })));
    }
}
