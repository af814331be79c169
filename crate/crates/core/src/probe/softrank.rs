//! Differentiable Spearman correlation through Sinkhorn soft ranks.
//!
//! Scores are standardized and placed on the scale of the anchors `1..m`,
//! then transported onto the anchors with squared-distance cost and
//! entropic regularization `epsilon`. Soft rank `R_i` is the
//! transport-weighted mean anchor of score `i`. The dual potential on the
//! anchors starts from the exact (unregularized) one-dimensional solution,
//! so small `epsilon` needs few iterations. Gradients run backwards through
//! every unrolled iteration, the warm start, and the standardization.

use serde::{Deserialize, Serialize};

use crate::stats::average_ranks;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftRankConfig {
    pub epsilon: f64,
    pub iters: usize,
    /// Stop once every row marginal is within `tol` of uniform.
    pub tol: f64,
}

impl Default for SoftRankConfig {
    fn default() -> Self {
        SoftRankConfig {
            epsilon: 0.1,
            iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftSpearman {
    pub value: f64,
    /// Soft ranks or gold ranks had zero variance; `value` is then 0.
    pub degenerate: bool,
    pub iterations: usize,
    pub marginal_error: f64,
}

impl SoftSpearman {
    fn degenerate() -> Self {
        SoftSpearman {
            value: 0.0,
            degenerate: true,
            iterations: 0,
            marginal_error: 0.0,
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

struct Tape {
    m: usize,
    eps: f64,
    std: f64,
    z: Vec<f64>,
    /// Standardized scores on the anchor scale.
    zp: Vec<f64>,
    /// `cost[i * m + j] = (zp_i - a_j)^2`.
    cost: Vec<f64>,
    order: Vec<usize>,
    /// `gs[0]` is the warm start; `gs[t]` follows `fs[t - 1]`.
    gs: Vec<Vec<f64>>,
    fs: Vec<Vec<f64>>,
    ranks: Vec<f64>,
    marginal_error: f64,
}

fn anchor(j: usize) -> f64 {
    (j + 1) as f64
}

impl Tape {
    fn c(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.m + j]
    }

    /// Row-wise softmax over anchors of `(g_j - C_ij) / eps`.
    fn row_softmax(&self, g: &[f64], i: usize) -> Vec<f64> {
        let u: Vec<f64> = (0..self.m).map(|j| (g[j] - self.c(i, j)) / self.eps).collect();
        let lse = log_sum_exp(u.iter().cloned());
        u.iter().map(|v| (v - lse).exp()).collect()
    }

    /// Column-wise softmax over scores of `(f_i - C_ij) / eps`.
    fn col_softmax(&self, f: &[f64], j: usize) -> Vec<f64> {
        let u: Vec<f64> = (0..self.m).map(|i| (f[i] - self.c(i, j)) / self.eps).collect();
        let lse = log_sum_exp(u.iter().cloned());
        u.iter().map(|v| (v - lse).exp()).collect()
    }

    fn forward(x: &[f64], cfg: &SoftRankConfig) -> Option<Tape> {
        let m = x.len();
        if m < 2 {
            return None;
        }
        let mf = m as f64;
        let mean = x.iter().sum::<f64>() / mf;
        let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / mf).sqrt();
        let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if !(std > 1e-12 * scale.max(1e-300)) {
            return None;
        }
        let anchor_mean = (mf + 1.0) / 2.0;
        let anchor_std = ((mf * mf - 1.0) / 12.0).sqrt();
        let z: Vec<f64> = x.iter().map(|v| (v - mean) / std).collect();
        let zp: Vec<f64> = z.iter().map(|v| v * anchor_std + anchor_mean).collect();
        let mut cost = Vec::with_capacity(m * m);
        for &zi in &zp {
            for j in 0..m {
                cost.push((zi - anchor(j)).powi(2));
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| zp[a].total_cmp(&zp[b]));
        let mut g0 = vec![0.0; m];
        for k in 0..m - 1 {
            g0[k + 1] = g0[k] - (zp[order[k]] + zp[order[k + 1]]) + 2.0 * anchor(k) + 1.0;
        }

        let mut tape = Tape {
            m,
            eps: cfg.epsilon,
            std,
            z,
            zp,
            cost,
            order,
            gs: vec![g0],
            fs: Vec::new(),
            ranks: Vec::new(),
            marginal_error: f64::NAN,
        };
        let eps = cfg.epsilon;
        let log_w = -(mf.ln());
        for _ in 0..cfg.iters {
            let g = tape.gs.last().unwrap();
            let f: Vec<f64> = (0..m)
                .map(|i| eps * log_w - eps * log_sum_exp((0..m).map(|j| (g[j] - tape.c(i, j)) / eps)))
                .collect();
            let g_new: Vec<f64> = (0..m)
                .map(|j| eps * log_w - eps * log_sum_exp((0..m).map(|i| (f[i] - tape.c(i, j)) / eps)))
                .collect();
            let err = (0..m)
                .map(|i| {
                    let row = f[i] / eps + log_sum_exp((0..m).map(|j| (g_new[j] - tape.c(i, j)) / eps));
                    (mf * row.exp() - 1.0).abs()
                })
                .fold(0.0, f64::max);
            tape.fs.push(f);
            tape.gs.push(g_new);
            tape.marginal_error = err;
            if err <= cfg.tol {
                break;
            }
        }
        let g = tape.gs.last().unwrap().clone();
        tape.ranks = (0..m)
            .map(|i| {
                tape.row_softmax(&g, i)
                    .iter()
                    .enumerate()
                    .map(|(j, s)| s * anchor(j))
                    .sum()
            })
            .collect();
        Some(tape)
    }

    /// Pulls an adjoint on the soft ranks back to the raw scores.
    fn backward(&self, rank_bar: &[f64]) -> Vec<f64> {
        let m = self.m;
        let eps = self.eps;
        let mut cost_bar = vec![0.0; m * m];
        let mut g_bar = vec![0.0; m];
        let g_final = self.gs.last().unwrap();
        for i in 0..m {
            let s = self.row_softmax(g_final, i);
            for j in 0..m {
                let u_bar = rank_bar[i] * s[j] * (anchor(j) - self.ranks[i]);
                g_bar[j] += u_bar / eps;
                cost_bar[i * m + j] -= u_bar / eps;
            }
        }
        for t in (0..self.fs.len()).rev() {
            let f = &self.fs[t];
            let mut f_bar = vec![0.0; m];
            for j in 0..m {
                let b = self.col_softmax(f, j);
                for i in 0..m {
                    f_bar[i] -= g_bar[j] * b[i];
                    cost_bar[i * m + j] += g_bar[j] * b[i];
                }
            }
            let g_prev = &self.gs[t];
            let mut g_prev_bar = vec![0.0; m];
            for i in 0..m {
                let a = self.row_softmax(g_prev, i);
                for j in 0..m {
                    g_prev_bar[j] -= f_bar[i] * a[j];
                    cost_bar[i * m + j] += f_bar[i] * a[j];
                }
            }
            g_bar = g_prev_bar;
        }

        let mut zp_bar = vec![0.0; m];
        // Warm start: g0[k] = -sum_{l<k} (zs_l + zs_{l+1}) + const.
        let mut suffix = vec![0.0; m + 1];
        for k in (0..m).rev() {
            suffix[k] = suffix[k + 1] + g_bar[k];
        }
        for q in 0..m {
            let mut d = -suffix[q + 1];
            if q >= 1 {
                d -= suffix[q];
            }
            zp_bar[self.order[q]] += d;
        }
        for i in 0..m {
            for j in 0..m {
                zp_bar[i] += cost_bar[i * m + j] * 2.0 * (self.zp[i] - anchor(j));
            }
        }
        let anchor_std = ((m as f64).powi(2) - 1.0).sqrt() / 12f64.sqrt();
        let z_bar: Vec<f64> = zp_bar.iter().map(|v| v * anchor_std).collect();
        let mf = m as f64;
        let mean_bar = z_bar.iter().sum::<f64>() / mf;
        let mean_bar_z = z_bar.iter().zip(&self.z).map(|(a, b)| a * b).sum::<f64>() / mf;
        (0..m)
            .map(|i| (z_bar[i] - mean_bar - self.z[i] * mean_bar_z) / self.std)
            .collect()
    }
}

/// Soft ranks of `x` on the scale `1..=len`; `None` for constant input.
pub fn soft_ranks(x: &[f64], cfg: &SoftRankConfig) -> Option<Vec<f64>> {
    Tape::forward(x, cfg).map(|t| t.ranks)
}

fn centered_unit(v: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|a| a - mean).collect();
    let norm = c.iter().map(|a| a * a).sum::<f64>().sqrt();
    (norm > 1e-12).then(|| (c.iter().map(|a| a / norm).collect(), norm))
}

fn evaluate(x: &[f64], gold_ranks: &[f64], cfg: &SoftRankConfig, want_grad: bool) -> (SoftSpearman, Vec<f64>) {
    assert_eq!(x.len(), gold_ranks.len(), "soft Spearman needs equal lengths");
    let zero = vec![0.0; x.len()];
    let Some((u, _)) = centered_unit(gold_ranks) else {
        return (SoftSpearman::degenerate(), zero);
    };
    let Some(tape) = Tape::forward(x, cfg) else {
        return (SoftSpearman::degenerate(), zero);
    };
    let Some((r_hat, r_norm)) = centered_unit(&tape.ranks) else {
        return (SoftSpearman::degenerate(), zero);
    };
    let rho: f64 = r_hat.iter().zip(&u).map(|(a, b)| a * b).sum();
    let out = SoftSpearman {
        value: rho,
        degenerate: false,
        iterations: tape.fs.len(),
        marginal_error: tape.marginal_error,
    };
    if !want_grad {
        return (out, zero);
    }
    let rank_bar: Vec<f64> = (0..x.len()).map(|i| (u[i] - rho * r_hat[i]) / r_norm).collect();
    (out, tape.backward(&rank_bar))
}

/// Pearson correlation of the soft ranks of `x` with the exact average
/// ranks of `y`.
pub fn soft_spearman(x: &[f64], y: &[f64], cfg: &SoftRankConfig) -> SoftSpearman {
    evaluate(x, &average_ranks(y), cfg, false).0
}

/// As [`soft_spearman`], with the gradient with respect to `x`.
pub fn soft_spearman_grad(x: &[f64], y: &[f64], cfg: &SoftRankConfig) -> (SoftSpearman, Vec<f64>) {
    evaluate(x, &average_ranks(y), cfg, true)
}

/// Gold ranks already computed; skips re-ranking `y` each step.
pub(crate) fn soft_spearman_ranked(x: &[f64], gold_ranks: &[f64], cfg: &SoftRankConfig, want_grad: bool) -> (SoftSpearman, Vec<f64>) {
    evaluate(x, gold_ranks, cfg, want_grad)
}
