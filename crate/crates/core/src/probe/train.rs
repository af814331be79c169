//! Adam on `L_s + λ L_a` with analytic gradients.
//!
//! One epoch visits every training description once: it runs as many
//! rounds as the largest graph has descriptions, and in each round every
//! graph contributes its next description (from a per-epoch permutation).
//! Each round the graphs are shuffled and cut into batches of
//! `batch_graphs`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::ProbeData;
use super::loss::{batch_loss, graph_loss, output_losses, GraphLoss};
use super::softrank::SoftRankConfig;
use super::PolarProbe;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::stats::spearman_resolved;

const TRAIN_STREAM: u64 = 0x7472_6169_6e;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub rank: usize,
    pub batch_graphs: usize,
    pub soft_rank_epsilon: f64,
    pub sinkhorn_iters: usize,
    pub sinkhorn_tol: f64,
    pub seed: u64,
    /// Keep `B` at its initial value and train only the prototypes.
    pub freeze_probe: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 5.0,
            learning_rate: 1e-5,
            epochs: 100,
            rank: 512,
            batch_graphs: 8,
            soft_rank_epsilon: 0.1,
            sinkhorn_iters: 100,
            sinkhorn_tol: 1e-6,
            seed: 0,
            freeze_probe: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda >= 0.0 && self.lambda.is_finite()),
            ("learning_rate", self.learning_rate > 0.0 && self.learning_rate.is_finite()),
            ("rank", self.rank > 0),
            ("batch_graphs", self.batch_graphs > 0),
            ("soft_rank_epsilon", self.soft_rank_epsilon > 0.0 && self.soft_rank_epsilon.is_finite()),
            ("sinkhorn_iters", self.sinkhorn_iters > 0),
            ("sinkhorn_tol", self.sinkhorn_tol >= 0.0),
        ];
        for (name, ok) in positive {
            if !ok {
                return Err(Error::Config(format!("train.{name} is out of range")));
            }
        }
        Ok(())
    }

    pub fn soft_rank(&self) -> SoftRankConfig {
        SoftRankConfig {
            epsilon: self.soft_rank_epsilon,
            iters: self.sinkhorn_iters,
            tol: self.sinkhorn_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_structural: f64,
    pub train_angular: f64,
    pub train_total: f64,
    pub val_structural: f64,
    pub val_angular: f64,
    pub val_existence_rho: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub probe: PolarProbe,
    pub history: Vec<EpochRecord>,
}

struct Moments {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl Moments {
    fn new(shape: (usize, usize)) -> Self {
        Moments {
            m: DMatrix::zeros(shape.0, shape.1),
            v: DMatrix::zeros(shape.0, shape.1),
        }
    }

    fn step(&mut self, param: &mut DMatrix<f64>, grad: &DMatrix<f64>, lr: f64, t: i32) {
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for ((p, g), (m, v)) in param
            .iter_mut()
            .zip(grad.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Default)]
struct Running {
    structural: f64,
    angular: f64,
    graphs: usize,
    angular_graphs: usize,
}

impl Running {
    fn add(&mut self, l: &GraphLoss) {
        self.structural += l.structural;
        self.graphs += 1;
        if let Some(a) = l.angular {
            self.angular += a;
            self.angular_graphs += 1;
        }
    }

    fn means(&self) -> (f64, f64) {
        let a = if self.angular_graphs == 0 {
            0.0
        } else {
            self.angular / self.angular_graphs as f64
        };
        (self.structural / self.graphs.max(1) as f64, a)
    }
}

/// Validation losses and mean exact existence ρ over described samples.
pub fn validation_metrics(probe: &PolarProbe, data: &ProbeData, soft: &SoftRankConfig) -> (f64, f64, f64) {
    let per_graph: Vec<(Running, Vec<f64>)> = data
        .graphs
        .par_iter()
        .map(|g| {
            let mut run = Running::default();
            let mut rhos = Vec::new();
            for s in &g.samples {
                let out = probe.forward_matrix(&s.h);
                let (structural, angular) = output_losses(&out, &g.target, soft);
                run.add(&GraphLoss {
                    structural,
                    angular,
                    degenerate: false,
                    grad_b_structural: None,
                    grad_b_angular: None,
                    grad_prototypes: None,
                });
                if let Some(r) = spearman_resolved(&out.upper_distances(), &g.target.gold_upper) {
                    rhos.push(r);
                }
            }
            (run, rhos)
        })
        .collect();
    let mut total = Running::default();
    let mut rhos = Vec::new();
    for (r, rs) in per_graph {
        total.structural += r.structural;
        total.angular += r.angular;
        total.graphs += r.graphs;
        total.angular_graphs += r.angular_graphs;
        rhos.extend(rs);
    }
    let (s, a) = total.means();
    let rho = if rhos.is_empty() {
        f64::NAN
    } else {
        rhos.iter().sum::<f64>() / rhos.len() as f64
    };
    (s, a, rho)
}

pub fn train(init: PolarProbe, data: &ProbeData, validation: Option<&ProbeData>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !data.missing.is_empty() {
        return Err(Error::Config(format!(
            "{} training samples have no activations (first: {})",
            data.missing.len(),
            data.missing[0]
        )));
    }
    if data.sample_count() == 0 {
        return Err(Error::Config("no training samples".into()));
    }
    for (what, expected, found) in [("activation width", data.d, init.d()), ("directional types", data.t(), init.t())] {
        if expected != found {
            return Err(Error::DimensionMismatch {
                context: format!("probe vs training data {what}"),
                expected,
                found,
            });
        }
    }
    let soft = cfg.soft_rank();
    let mut probe = init;
    let mut moments_b = Moments::new(probe.b.shape());
    let mut moments_p = Moments::new(probe.prototypes.shape());
    let mut step = 0i32;
    let mut rng = stream(cfg.seed, &[TRAIN_STREAM]);
    let active: Vec<usize> = (0..data.graphs.len()).filter(|&g| !data.graphs[g].samples.is_empty()).collect();
    let rounds = data.graphs.iter().map(|g| g.samples.len()).max().unwrap_or(0);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let perms: Vec<Vec<usize>> = data
            .graphs
            .iter()
            .map(|g| {
                let mut p: Vec<usize> = (0..g.samples.len()).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let mut running = Running::default();
        for round in 0..rounds {
            let mut order = active.clone();
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_graphs) {
                let losses: Vec<GraphLoss> = chunk
                    .par_iter()
                    .map(|&g| {
                        let graph = &data.graphs[g];
                        let s = perms[g][round % graph.samples.len()];
                        graph_loss(&probe, &graph.samples[s].h, &graph.target, &soft, true)
                    })
                    .collect();
                for (l, &g) in losses.iter().zip(chunk) {
                    if !l.is_finite() {
                        return Err(Error::NonFinite {
                            epoch,
                            graph_id: data.graphs[g].target.graph_id.clone(),
                        });
                    }
                    running.add(l);
                }
                let batch = batch_loss(&probe, &losses, cfg.lambda);
                let (gb, gp) = (batch.grad_b.unwrap(), batch.grad_prototypes.unwrap());
                if gb.iter().chain(gp.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        epoch,
                        graph_id: data.graphs[chunk[0]].target.graph_id.clone(),
                    });
                }
                step += 1;
                if !cfg.freeze_probe {
                    moments_b.step(&mut probe.b, &gb, cfg.learning_rate, step);
                }
                moments_p.step(&mut probe.prototypes, &gp, cfg.learning_rate, step);
            }
        }
        let (train_structural, train_angular) = running.means();
        let (val_structural, val_angular, val_existence_rho) = match validation {
            Some(v) if v.sample_count() > 0 => validation_metrics(&probe, v, &soft),
            _ => (f64::NAN, f64::NAN, f64::NAN),
        };
        history.push(EpochRecord {
            epoch,
            train_structural,
            train_angular,
            train_total: train_structural + cfg.lambda * train_angular,
            val_structural,
            val_angular,
            val_existence_rho,
        });
    }
    Ok(TrainOutcome { probe, history })
}
