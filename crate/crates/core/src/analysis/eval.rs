//! Exact-rank evaluation of a trained probe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gen::{OodFlags, Split};
use crate::graph::Domain;
use crate::probe::{GraphTarget, PolarProbe, ProbeData, ProbeOutputs};
use crate::stats::{mean, spearman_within, std_error, RANK_RESOLUTION};

/// Cells entering the type correlation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeIndexSet {
    /// Both orientations of every directional edge pair, all directional types.
    #[default]
    Edges,
    /// Every ordered pair `i != j`, all directional types.
    AllPairs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub type_index_set: TypeIndexSet,
    /// Predicted values within this fraction of the largest one count as
    /// tied. Probe outputs come from `f32` activations, so equal exact
    /// distances arrive with ~1e-7 relative jitter. 0 ranks exactly, which
    /// makes ρ invariant under every strictly increasing map of the
    /// predictions; a positive resolution keeps invariance under rescaling.
    pub rank_resolution: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            type_index_set: TypeIndexSet::Edges,
            rank_resolution: RANK_RESOLUTION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub label: String,
    pub domain: Domain,
    pub split: Split,
    pub ood: OodFlags,
    pub layer: i64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphScore {
    pub graph_id: String,
    pub samples: usize,
    /// Mean over the graph's described samples.
    pub existence_rho: Option<f64>,
    pub type_rho: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: Condition,
    #[serde(flatten)]
    pub options: EvalOptions,
    pub existence_mean: f64,
    pub existence_se: f64,
    pub type_mean: f64,
    pub type_se: f64,
    /// Samples with an undefined correlation (constant predictions or gold).
    pub undefined_existence: usize,
    pub undefined_type: usize,
    /// Samples skipped for lack of activations.
    pub missing: Vec<String>,
    pub graphs: Vec<GraphScore>,
}

/// Spearman between predicted and gold distances for `i < j`.
pub fn existence_rho(out: &ProbeOutputs, target: &GraphTarget, opts: &EvalOptions) -> Option<f64> {
    spearman_within(&out.upper_distances(), &target.gold_upper, opts.rank_resolution)
}

/// Spearman between predicted cosines and the gold incidence.
pub fn type_rho(out: &ProbeOutputs, target: &GraphTarget, opts: &EvalOptions) -> Option<f64> {
    let t = target.t();
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    let mut push = |i: usize, j: usize| {
        for c in 0..t {
            pred.push(out.incidence(i, j, c));
            gold.push(target.gold_incidence(i, j, c));
        }
    };
    match opts.type_index_set {
        TypeIndexSet::Edges => {
            for &(i, j) in &target.edge_pairs {
                push(i, j);
                push(j, i);
            }
        }
        TypeIndexSet::AllPairs => {
            for i in 0..target.n {
                for j in 0..target.n {
                    if i != j {
                        push(i, j);
                    }
                }
            }
        }
    }
    spearman_within(&pred, &gold, opts.rank_resolution)
}

fn summarize(values: &[f64]) -> (f64, f64) {
    (mean(values), std_error(values))
}

pub fn eval_probe(probe: &PolarProbe, data: &ProbeData, condition: Condition, opts: &EvalOptions) -> Result<EvalReport> {
    if data.sample_count() > 0 && data.d != probe.d() {
        return Err(crate::Error::DimensionMismatch {
            context: "activation width vs probe".into(),
            expected: probe.d(),
            found: data.d,
        });
    }
    let per_graph: Vec<(GraphScore, usize, usize)> = data
        .graphs
        .par_iter()
        .map(|g| {
            let mut ex = Vec::new();
            let mut ty = Vec::new();
            for s in &g.samples {
                let out = probe.forward_matrix(&s.h);
                ex.extend(existence_rho(&out, &g.target, opts));
                ty.extend(type_rho(&out, &g.target, opts));
            }
            let n = g.samples.len();
            let score = GraphScore {
                graph_id: g.target.graph_id.clone(),
                samples: n,
                existence_rho: (!ex.is_empty()).then(|| mean(&ex)),
                type_rho: (!ty.is_empty()).then(|| mean(&ty)),
            };
            (score, n - ex.len(), n - ty.len())
        })
        .collect();
    let mut graphs = Vec::with_capacity(per_graph.len());
    let (mut undefined_existence, mut undefined_type) = (0, 0);
    for (score, ue, ut) in per_graph {
        undefined_existence += ue;
        undefined_type += ut;
        graphs.push(score);
    }
    let ex: Vec<f64> = graphs.iter().filter_map(|g| g.existence_rho).collect();
    let ty: Vec<f64> = graphs.iter().filter_map(|g| g.type_rho).collect();
    let (existence_mean, existence_se) = summarize(&ex);
    let (type_mean, type_se) = summarize(&ty);
    Ok(EvalReport {
        condition,
        options: *opts,
        existence_mean,
        existence_se,
        type_mean,
        type_se,
        undefined_existence,
        undefined_type,
        missing: data.missing.clone(),
        graphs,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    label: &'a str,
    domain: Domain,
    split: Split,
    layer: i64,
    rank: usize,
    ood_entities: bool,
    ood_relations: bool,
    no_prompt: bool,
    graph_id: &'a str,
    samples: usize,
    existence_rho: Option<f64>,
    type_rho: Option<f64>,
}

impl EvalReport {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    /// Appends one row per graph; writes the header when `header` is set.
    pub fn write_csv<W: std::io::Write>(reports: &[EvalReport], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in reports {
            let c = &r.condition;
            for g in &r.graphs {
                w.serialize(CsvRow {
                    label: &c.label,
                    domain: c.domain,
                    split: c.split,
                    layer: c.layer,
                    rank: c.rank,
                    ood_entities: c.ood.entities,
                    ood_relations: c.ood.relations,
                    no_prompt: c.ood.no_prompt,
                    graph_id: &g.graph_id,
                    samples: g.samples,
                    existence_rho: g.existence_rho,
                    type_rho: g.type_rho,
                })
                .map_err(|e| crate::Error::Io(std::io::Error::other(e)))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
