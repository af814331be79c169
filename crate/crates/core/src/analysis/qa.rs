//! Correlating probe-space errors with the model's correct-answer logits.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::probe::{GraphTarget, ProbeOutputs};
use crate::stats::{average_ranks, pearson, z_scores};

pub const MIN_OBSERVATIONS: usize = 30;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;

/// One line of the extractor's logits file. Extra fields (probabilities,
/// steered logits) are kept but not interpreted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub qa_id: String,
    pub logit: f64,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeErrors {
    /// `1 - cos` at the queried type; `None` for non-directional types.
    pub type_error: Option<f64>,
    /// `|‖δ‖ - d_gold|` on the queried pair.
    pub existence_error: f64,
}

pub fn probe_errors(out: &ProbeOutputs, target: &GraphTarget, edge: Edge) -> ProbeErrors {
    let gold = target.gold_upper[upper_index(target.n, edge.src.min(edge.dst), edge.src.max(edge.dst))];
    let type_error = target
        .directional
        .iter()
        .position(|&r| r == edge.rel)
        .map(|c| 1.0 - out.incidence(edge.src, edge.dst, c));
    ProbeErrors {
        type_error,
        existence_error: (out.distance(edge.src, edge.dst) - gold).abs(),
    }
}

fn upper_index(n: usize, i: usize, j: usize) -> usize {
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaObservation {
    pub graph_id: String,
    pub error: f64,
    pub logit: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaCorrelation {
    /// `None` when either side is constant after normalization.
    pub rho: Option<f64>,
    /// Two-sided permutation p-value, `(1 + hits) / (1 + permutations)`.
    pub p_value: Option<f64>,
    pub n: usize,
    pub permutations: usize,
}

/// Errors z-scored within each graph; graphs whose errors are all equal
/// contribute zeros.
pub fn normalize_within_graph(obs: &[QaObservation]) -> Vec<f64> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        groups.entry(&o.graph_id).or_default().push(i);
    }
    let mut out = vec![0.0; obs.len()];
    for idx in groups.values() {
        let errs: Vec<f64> = idx.iter().map(|&i| obs[i].error).collect();
        if let Some(z) = z_scores(&errs) {
            for (k, &i) in idx.iter().enumerate() {
                out[i] = z[k];
            }
        }
    }
    out
}

pub fn qa_correlation<R: Rng + ?Sized>(obs: &[QaObservation], permutations: usize, rng: &mut R) -> Result<QaCorrelation> {
    if obs.len() < MIN_OBSERVATIONS {
        return Err(Error::Degenerate(format!(
            "need at least {MIN_OBSERVATIONS} paired observations, got {}",
            obs.len()
        )));
    }
    if obs.iter().any(|o| !o.error.is_finite() || !o.logit.is_finite()) {
        return Err(Error::Degenerate("non-finite error or logit".into()));
    }
    let errors = normalize_within_graph(obs);
    let logits: Vec<f64> = obs.iter().map(|o| o.logit).collect();
    let re = average_ranks(&errors);
    let mut rl = average_ranks(&logits);
    let Some(rho) = pearson(&re, &rl) else {
        return Ok(QaCorrelation {
            rho: None,
            p_value: None,
            n: obs.len(),
            permutations: 0,
        });
    };
    let mut hits = 0usize;
    for _ in 0..permutations {
        rl.shuffle(rng);
        if let Some(r) = pearson(&re, &rl) {
            if r.abs() >= rho.abs() - 1e-12 {
                hits += 1;
            }
        }
    }
    Ok(QaCorrelation {
        rho: Some(rho),
        p_value: Some((1 + hits) as f64 / (1 + permutations) as f64),
        n: obs.len(),
        permutations,
    })
}
