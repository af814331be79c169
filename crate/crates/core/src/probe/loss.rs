//! Structural and angular losses with their gradients.
//!
//! For one graph, with projections `P = H Bᵀ` and differences
//! `δ_ij = P_i - P_j`:
//!
//! * structural: `1 - ρ_soft(‖δ_ij‖ for i < j, gold distances)`;
//! * angular: mean squared error between `cos(δ_ij, p_r)` and the gold
//!   incidence over directional edge pairs `(i, j)` and directional types.
//!
//! Gradients reach `B` through `∂B = P̄ᵀ H`.

use nalgebra::DMatrix;

use super::softrank::{soft_spearman_ranked, SoftRankConfig};
use super::{PolarProbe, ProbeOutputs, COSINE_GUARD};
use crate::error::{Error, Result};
use crate::graph::{incidence_tensor, shortest_path_distances, RelationalGraph};
use crate::stats::average_ranks;

/// Gold quantities for one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphTarget {
    pub graph_id: String,
    pub n: usize,
    /// Gold distances for `i < j`, row by row.
    pub gold_upper: Vec<f64>,
    pub gold_ranks: Vec<f64>,
    /// Relation-type index of each prototype column.
    pub directional: Vec<usize>,
    /// `incidence[(i * n + j) * t + c]` for prototype column `c`.
    pub incidence: Vec<f64>,
    /// Distinct ordered pairs carrying at least one directional edge.
    pub edge_pairs: Vec<(usize, usize)>,
}

impl GraphTarget {
    pub fn new(graph_id: &str, graph: &RelationalGraph, directional: &[usize]) -> Result<Self> {
        let n = graph.n();
        if n < 3 {
            return Err(Error::InsufficientPairs(n));
        }
        let gold_upper = shortest_path_distances(graph)?.upper_triangle();
        let tensor = incidence_tensor(graph, directional);
        let t = directional.len();
        let mut incidence = vec![0.0; n * n * t];
        for i in 0..n {
            for j in 0..n {
                for (c, &r) in directional.iter().enumerate() {
                    incidence[(i * n + j) * t + c] = tensor.get(i, j, r) as f64;
                }
            }
        }
        let mut edge_pairs: Vec<(usize, usize)> = graph
            .edges()
            .iter()
            .filter(|e| directional.contains(&e.rel))
            .map(|e| (e.src, e.dst))
            .collect();
        edge_pairs.sort_unstable();
        edge_pairs.dedup();
        Ok(GraphTarget {
            graph_id: graph_id.to_string(),
            n,
            gold_ranks: average_ranks(&gold_upper),
            gold_upper,
            directional: directional.to_vec(),
            incidence,
            edge_pairs,
        })
    }

    pub fn t(&self) -> usize {
        self.directional.len()
    }

    pub fn gold_incidence(&self, i: usize, j: usize, c: usize) -> f64 {
        self.incidence[(i * self.n + j) * self.t() + c]
    }
}

/// One graph's losses and, when requested, their gradients.
#[derive(Clone, Debug)]
pub struct GraphLoss {
    pub structural: f64,
    /// `None` when the graph has no directional edge.
    pub angular: Option<f64>,
    /// Soft ranks or gold ranks had zero variance.
    pub degenerate: bool,
    pub grad_b_structural: Option<DMatrix<f64>>,
    pub grad_b_angular: Option<DMatrix<f64>>,
    pub grad_prototypes: Option<DMatrix<f64>>,
}

impl GraphLoss {
    pub fn is_finite(&self) -> bool {
        self.structural.is_finite() && self.angular.is_none_or(f64::is_finite)
    }
}

/// Losses of one described sample `h` (`n × d`) against its graph.
pub fn graph_loss(probe: &PolarProbe, h: &DMatrix<f64>, target: &GraphTarget, soft: &SoftRankConfig, want_grad: bool) -> GraphLoss {
    let out = probe.forward_matrix(h);
    let (n, k, t) = (out.n, out.k, out.t);
    assert_eq!(n, target.n, "activation rows vs graph entities");
    assert_eq!(t, target.t(), "prototype columns vs directional types");

    let pred = out.upper_distances();
    let (rho, rho_grad) = soft_spearman_ranked(&pred, &target.gold_ranks, soft, want_grad);
    let structural = 1.0 - rho.value;

    let cells = target.edge_pairs.len() * t;
    let angular = (cells > 0).then(|| {
        let mut sum = 0.0;
        for &(i, j) in &target.edge_pairs {
            for c in 0..t {
                sum += (out.incidence(i, j, c) - target.gold_incidence(i, j, c)).powi(2);
            }
        }
        sum / cells as f64
    });

    let mut result = GraphLoss {
        structural,
        angular,
        degenerate: rho.degenerate,
        grad_b_structural: None,
        grad_b_angular: None,
        grad_prototypes: None,
    };
    if !want_grad {
        return result;
    }

    // Structural: ∂(1 - ρ)/∂δ_ij = -ρ̄_ij δ_ij / ‖δ_ij‖ for i < j.
    let mut p_bar_s = DMatrix::zeros(n, k);
    let mut idx = 0;
    for i in 0..n {
        for j in i + 1..n {
            let dist = out.distance(i, j);
            let g = -rho_grad[idx];
            idx += 1;
            if g == 0.0 || dist == 0.0 {
                continue;
            }
            let delta = out.delta(i, j);
            for c in 0..k {
                let v = g * delta[c] / dist;
                p_bar_s[(i, c)] += v;
                p_bar_s[(j, c)] -= v;
            }
        }
    }

    let mut p_bar_a = DMatrix::zeros(n, k);
    let mut proto_bar = DMatrix::zeros(k, t);
    if cells > 0 {
        let proto_norms: Vec<f64> = probe.prototypes.column_iter().map(|c| c.norm()).collect();
        for &(i, j) in &target.edge_pairs {
            let delta = out.delta(i, j);
            let dn = out.distance(i, j);
            for c in 0..t {
                let cos = out.incidence(i, j, c);
                let pn = proto_norms[c];
                if dn * pn <= COSINE_GUARD {
                    continue;
                }
                let g = 2.0 * (cos - target.gold_incidence(i, j, c)) / cells as f64;
                for q in 0..k {
                    let p = probe.prototypes[(q, c)];
                    let d_delta = g * (p / (dn * pn) - cos * delta[q] / (dn * dn));
                    let d_proto = g * (delta[q] / (dn * pn) - cos * p / (pn * pn));
                    p_bar_a[(i, q)] += d_delta;
                    p_bar_a[(j, q)] -= d_delta;
                    proto_bar[(q, c)] += d_proto;
                }
            }
        }
    }
    result.grad_b_structural = Some(p_bar_s.transpose() * h);
    result.grad_b_angular = Some(p_bar_a.transpose() * h);
    result.grad_prototypes = Some(proto_bar);
    result
}

/// Batch totals: `L_s` averages over all graphs, `L_a` over graphs with a
/// directional edge, and `total = L_s + λ L_a`.
#[derive(Clone, Debug)]
pub struct BatchLoss {
    pub structural: f64,
    pub angular: f64,
    pub total: f64,
    pub skipped_angular: usize,
    pub degenerate: usize,
    pub grad_b: Option<DMatrix<f64>>,
    pub grad_prototypes: Option<DMatrix<f64>>,
}

/// Combines per-graph losses in the order given.
pub fn batch_loss(probe: &PolarProbe, losses: &[GraphLoss], lambda: f64) -> BatchLoss {
    let nb = losses.len().max(1) as f64;
    let with_angular: Vec<&GraphLoss> = losses.iter().filter(|l| l.angular.is_some()).collect();
    let na = with_angular.len();
    let structural = losses.iter().map(|l| l.structural).sum::<f64>() / nb;
    let angular = if na == 0 {
        0.0
    } else {
        with_angular.iter().map(|l| l.angular.unwrap()).sum::<f64>() / na as f64
    };
    let has_grad = !losses.is_empty() && losses.iter().all(|l| l.grad_b_structural.is_some());
    let (grad_b, grad_prototypes) = if has_grad {
        let mut gb = DMatrix::zeros(probe.k(), probe.d());
        let mut gp = DMatrix::zeros(probe.k(), probe.t());
        for l in losses {
            gb += l.grad_b_structural.as_ref().unwrap() / nb;
            if l.angular.is_some() {
                let w = lambda / na as f64;
                gb += l.grad_b_angular.as_ref().unwrap() * w;
                gp += l.grad_prototypes.as_ref().unwrap() * w;
            }
        }
        (Some(gb), Some(gp))
    } else {
        (None, None)
    };
    BatchLoss {
        structural,
        angular,
        total: structural + lambda * angular,
        skipped_angular: losses.len() - na,
        degenerate: losses.iter().filter(|l| l.degenerate).count(),
        grad_b,
        grad_prototypes,
    }
}

/// Losses of one forward pass, without gradients; used for reporting.
pub fn output_losses(out: &ProbeOutputs, target: &GraphTarget, soft: &SoftRankConfig) -> (f64, Option<f64>) {
    let (rho, _) = soft_spearman_ranked(&out.upper_distances(), &target.gold_ranks, soft, false);
    let cells = target.edge_pairs.len() * target.t();
    let angular = (cells > 0).then(|| {
        target
            .edge_pairs
            .iter()
            .flat_map(|&(i, j)| (0..target.t()).map(move |c| (i, j, c)))
            .map(|(i, j, c)| (out.incidence(i, j, c) - target.gold_incidence(i, j, c)).powi(2))
            .sum::<f64>()
            / cells as f64
    });
    (1.0 - rho.value, angular)
}
