//! Pairs described samples with their activation matrices.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::activation_matrix;
use super::loss::GraphTarget;
use crate::acts::ActivationRecord;
use crate::error::{Error, Result};
use crate::gen::GraphEntry;
use crate::schema::DomainSchema;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSample {
    pub sample_id: String,
    /// `n × d`.
    pub h: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeGraph {
    pub target: GraphTarget,
    pub samples: Vec<ProbeSample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeData {
    pub graphs: Vec<ProbeGraph>,
    /// Names of the directional relation types, one per prototype.
    pub relation_types: Vec<String>,
    pub d: usize,
    /// Samples with no activation record.
    pub missing: Vec<String>,
}

impl ProbeData {
    /// Graphs keep their order; samples without activations are listed in
    /// `missing` and left out. Every graph must share the same directional
    /// relation types.
    pub fn assemble<'a>(
        entries: impl IntoIterator<Item = &'a GraphEntry>,
        records: &HashMap<&str, &ActivationRecord>,
        schema: &DomainSchema,
    ) -> Result<ProbeData> {
        let mut graphs = Vec::new();
        let mut missing = Vec::new();
        let mut relation_types: Option<Vec<String>> = None;
        let mut d: Option<usize> = None;
        for entry in entries {
            let directional = schema.directional_types(&entry.graph);
            let names: Vec<String> = directional.iter().map(|&r| entry.graph.relation_types()[r].clone()).collect();
            match &relation_types {
                None => relation_types = Some(names),
                Some(prev) if *prev != names => {
                    return Err(Error::Config(format!(
                        "graph {} has directional types {names:?}, earlier graphs have {prev:?}",
                        entry.graph_id
                    )))
                }
                _ => {}
            }
            let target = GraphTarget::new(&entry.graph_id, &entry.graph, &directional)?;
            let mut samples = Vec::new();
            for s in &entry.samples {
                let Some(rec) = records.get(s.sample_id.as_str()) else {
                    missing.push(s.sample_id.clone());
                    continue;
                };
                if rec.n != entry.graph.n() {
                    return Err(Error::DimensionMismatch {
                        context: format!("activation rows of sample {}", s.sample_id),
                        expected: entry.graph.n(),
                        found: rec.n,
                    });
                }
                match d {
                    None => d = Some(rec.d),
                    Some(w) if w != rec.d => {
                        return Err(Error::DimensionMismatch {
                            context: format!("activation width of sample {}", s.sample_id),
                            expected: w,
                            found: rec.d,
                        })
                    }
                    _ => {}
                }
                samples.push(ProbeSample {
                    sample_id: s.sample_id.clone(),
                    h: activation_matrix(rec),
                });
            }
            graphs.push(ProbeGraph { target, samples });
        }
        Ok(ProbeData {
            graphs,
            relation_types: relation_types.unwrap_or_default(),
            d: d.unwrap_or(0),
            missing,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.graphs.iter().map(|g| g.samples.len()).sum()
    }

    pub fn t(&self) -> usize {
        self.relation_types.len()
    }
}
