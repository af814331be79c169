//! Typed directed relational graphs with their gold distance matrix and
//! incidence tensor.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod validate;

pub use validate::{grid_coordinates, validate_graph, ValidationReport, Violation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Ordinality,
    Spatial,
    Thematic,
    Family,
    Metro,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Ordinality,
        Domain::Spatial,
        Domain::Thematic,
        Domain::Family,
        Domain::Metro,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Ordinality => "ordinality",
            Domain::Spatial => "spatial",
            Domain::Thematic => "thematic",
            Domain::Family => "family",
            Domain::Metro => "metro",
        }
    }

    /// Grid dimension for the Euclidean domains.
    pub fn grid_dims(self) -> Option<usize> {
        match self {
            Domain::Ordinality => Some(1),
            Domain::Spatial | Domain::Thematic => Some(2),
            Domain::Family | Domain::Metro => None,
        }
    }

    pub fn is_euclidean(self) -> bool {
        self.grid_dims().is_some()
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown domain {s:?}")))
    }
}

/// A typed directed edge `(src, dst, rel)`; serialized as `[src, dst, rel]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub rel: usize,
}

impl Edge {
    pub fn new(src: usize, dst: usize, rel: usize) -> Self {
        Edge { src, dst, rel }
    }
}

impl From<[usize; 3]> for Edge {
    fn from([src, dst, rel]: [usize; 3]) -> Self {
        Edge { src, dst, rel }
    }
}

impl From<Edge> for [usize; 3] {
    fn from(e: Edge) -> Self {
        [e.src, e.dst, e.rel]
    }
}

#[derive(Deserialize)]
struct RawGraph {
    domain: Domain,
    entities: Vec<String>,
    relation_types: Vec<String>,
    edges: Vec<Edge>,
}

/// Entities plus typed directed edges. Immutable once built; construction
/// checks the structural invariants (connectivity is left to validation).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct RelationalGraph {
    domain: Domain,
    entities: Vec<String>,
    relation_types: Vec<String>,
    edges: Vec<Edge>,
}

impl TryFrom<RawGraph> for RelationalGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        RelationalGraph::new(raw.domain, raw.entities, raw.relation_types, raw.edges)
    }
}

impl RelationalGraph {
    pub fn new(
        domain: Domain,
        entities: Vec<String>,
        relation_types: Vec<String>,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        let mut names = HashSet::new();
        for e in &entities {
            if !names.insert(e.as_str()) {
                return Err(Error::InvalidGraph(format!("duplicate entity {e:?}")));
            }
        }
        let mut seen = HashSet::new();
        for e in &edges {
            if e.src >= entities.len() || e.dst >= entities.len() {
                return Err(Error::InvalidGraph(format!("edge {e:?} out of entity range")));
            }
            if e.rel >= relation_types.len() {
                return Err(Error::InvalidGraph(format!("edge {e:?} has unknown relation type")));
            }
            if e.src == e.dst {
                return Err(Error::InvalidGraph(format!("self loop {e:?}")));
            }
            if !seen.insert(*e) {
                return Err(Error::InvalidGraph(format!("duplicate edge {e:?}")));
            }
        }
        Ok(RelationalGraph {
            domain,
            entities,
            relation_types,
            edges,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relation_types(&self) -> &[String] {
        &self.relation_types
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n(&self) -> usize {
        self.entities.len()
    }

    pub fn t(&self) -> usize {
        self.relation_types.len()
    }

    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == name)
    }

    pub fn has_edge(&self, src: usize, dst: usize, rel: usize) -> bool {
        self.edges.contains(&Edge::new(src, dst, rel))
    }

    /// Undirected neighbour lists over all typed edges.
    pub fn undirected_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n()];
        for e in &self.edges {
            if !adj[e.src].contains(&e.dst) {
                adj[e.src].push(e.dst);
            }
            if !adj[e.dst].contains(&e.src) {
                adj[e.dst].push(e.src);
            }
        }
        adj
    }

    /// Label-level identity: the sorted `(src, dst, rel)` name triples plus
    /// the entity set. Two graphs with equal keys are the same labeled
    /// structure regardless of entity order.
    pub fn labeled_key(&self) -> (Vec<String>, Vec<(String, String, String)>) {
        let mut ents = self.entities.clone();
        ents.sort();
        let mut triples: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                (
                    self.entities[e.src].clone(),
                    self.entities[e.dst].clone(),
                    self.relation_types[e.rel].clone(),
                )
            })
            .collect();
        triples.sort();
        (ents, triples)
    }
}

/// Pairwise hop counts on the undirected skeleton.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<u32>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.values[i * self.n + j]
    }

    /// Row-major upper triangle (`i < j`).
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.get(i, j) as f64);
            }
        }
        out
    }

    pub fn rows(&self) -> Vec<Vec<u32>> {
        self.values.chunks(self.n.max(1)).map(<[u32]>::to_vec).collect()
    }
}

pub fn shortest_path_distances(graph: &RelationalGraph) -> Result<DistanceMatrix> {
    let n = graph.n();
    let adj = graph.undirected_adjacency();
    let mut values = vec![u32::MAX; n * n];
    for s in 0..n {
        let row = &mut values[s * n..(s + 1) * n];
        row[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if row[v] == u32::MAX {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if let Some(t) = row.iter().position(|&d| d == u32::MAX) {
            return Err(Error::Disconnected {
                a: graph.entities[s].clone(),
                b: graph.entities[t].clone(),
            });
        }
    }
    Ok(DistanceMatrix { n, values })
}

/// Antisymmetric `n × n × t` tensor of typed directed edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncidenceTensor {
    n: usize,
    t: usize,
    values: Vec<i8>,
}

impl IncidenceTensor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn get(&self, i: usize, j: usize, r: usize) -> i8 {
        self.values[(i * self.n + j) * self.t + r]
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }
}

/// Builds the incidence tensor. Slices of relation types missing from
/// `directional_types` stay zero.
pub fn incidence_tensor(graph: &RelationalGraph, directional_types: &[usize]) -> IncidenceTensor {
    let (n, t) = (graph.n(), graph.t());
    let mut values = vec![0i8; n * n * t];
    for e in graph.edges() {
        if !directional_types.contains(&e.rel) {
            continue;
        }
        values[(e.src * n + e.dst) * t + e.rel] += 1;
        values[(e.dst * n + e.src) * t + e.rel] -= 1;
    }
    IncidenceTensor { n, t, values }
}
