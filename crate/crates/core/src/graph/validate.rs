use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use super::{shortest_path_distances, RelationalGraph};
use crate::error::Error;
use crate::schema::{DomainSchema, Gender, RelationRole};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Disconnected { a: String, b: String },
    UnknownRelation(String),
    ParentCycle { through: String },
    TooManyParents { child: String, count: usize },
    SameGenderParents { child: String },
    GenderMismatch { entity: String, relation: String },
    UnknownGender(String),
    InconsistentParentage { a: String, b: String },
    SiblingIsAncestor { a: String, b: String },
    LineNotPath { line: String },
    NoGridEmbedding,
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Disconnected { .. } => "disconnected",
            Violation::UnknownRelation(_) => "unknown relation",
            Violation::ParentCycle { .. } => "parent cycle",
            Violation::TooManyParents { .. } => "too many parents",
            Violation::SameGenderParents { .. } => "same-gender parents",
            Violation::GenderMismatch { .. } => "gender mismatch",
            Violation::UnknownGender(_) => "unknown gender",
            Violation::InconsistentParentage { .. } => "inconsistent parentage",
            Violation::SiblingIsAncestor { .. } => "sibling is ancestor",
            Violation::LineNotPath { .. } => "line not a path",
            Violation::NoGridEmbedding => "no grid embedding",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Disconnected { a, b } => write!(f, "disconnected: {a} cannot reach {b}"),
            Violation::UnknownRelation(r) => write!(f, "unknown relation: {r}"),
            Violation::ParentCycle { through } => write!(f, "parent cycle through {through}"),
            Violation::TooManyParents { child, count } => write!(f, "too many parents: {child} has {count}"),
            Violation::SameGenderParents { child } => write!(f, "same-gender parents: {child}"),
            Violation::GenderMismatch { entity, relation } => {
                write!(f, "gender mismatch: {entity} cannot be subject of {relation}")
            }
            Violation::UnknownGender(e) => write!(f, "unknown gender: {e}"),
            Violation::InconsistentParentage { a, b } => {
                write!(f, "inconsistent parentage: siblings {a} and {b} have different parents")
            }
            Violation::SiblingIsAncestor { a, b } => write!(f, "sibling is ancestor: {a} and {b}"),
            Violation::LineNotPath { line } => write!(f, "line not a path: {line}"),
            Violation::NoGridEmbedding => f.write_str("no grid embedding"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: &str) -> bool {
        self.violations.iter().any(|v| v.kind() == kind)
    }
}

pub fn validate_graph(graph: &RelationalGraph, schema: &DomainSchema) -> ValidationReport {
    let mut violations = Vec::new();
    if let Err(Error::Disconnected { a, b }) = shortest_path_distances(graph) {
        violations.push(Violation::Disconnected { a, b });
    }
    for name in graph.relation_types() {
        if schema.relation(name, false).is_none() {
            violations.push(Violation::UnknownRelation(name.clone()));
        }
    }
    if !violations.is_empty() {
        return ValidationReport { violations };
    }
    if graph.domain().is_euclidean() {
        if grid_coordinates(graph).is_none() {
            violations.push(Violation::NoGridEmbedding);
        }
    } else if schema.relation_specs.iter().any(|s| s.role.is_some()) {
        check_family(graph, schema, &mut violations);
    } else {
        check_lines(graph, &mut violations);
    }
    ValidationReport { violations }
}

/// Integer grid coordinates realizing every edge `(i, j, r)` as
/// `coords[j] - coords[i] = e_r`, with entity 0 at the origin. `None` when
/// no injective placement exists or the graph is disconnected.
pub fn grid_coordinates(graph: &RelationalGraph) -> Option<Vec<Vec<i64>>> {
    let (n, t) = (graph.n(), graph.t());
    if n == 0 {
        return Some(Vec::new());
    }
    // (neighbour, axis, sign) such that coords[nb] = coords[u] + sign * e_axis
    let mut adj: Vec<Vec<(usize, usize, i64)>> = vec![Vec::new(); n];
    for e in graph.edges() {
        adj[e.src].push((e.dst, e.rel, 1));
        adj[e.dst].push((e.src, e.rel, -1));
    }
    let mut coords: Vec<Option<Vec<i64>>> = vec![None; n];
    coords[0] = Some(vec![0; t]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let cu = coords[u].clone()?;
        for &(v, axis, sign) in &adj[u] {
            let mut cv = cu.clone();
            cv[axis] += sign;
            match &coords[v] {
                Some(existing) if *existing != cv => return None,
                Some(_) => {}
                None => {
                    coords[v] = Some(cv);
                    queue.push_back(v);
                }
            }
        }
    }
    let coords: Vec<Vec<i64>> = coords.into_iter().collect::<Option<_>>()?;
    let distinct: BTreeSet<&Vec<i64>> = coords.iter().collect();
    (distinct.len() == n).then_some(coords)
}

fn check_family(graph: &RelationalGraph, schema: &DomainSchema, out: &mut Vec<Violation>) {
    let n = graph.n();
    let names = graph.entities();
    let genders: Vec<Option<Gender>> = names.iter().map(|e| schema.gender_of(e)).collect();
    for (i, g) in genders.iter().enumerate() {
        if g.is_none() {
            out.push(Violation::UnknownGender(names[i].clone()));
        }
    }
    let mut parents: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut siblings = Vec::new();
    for e in graph.edges() {
        let Some(spec) = schema.relation(&graph.relation_types()[e.rel], false) else {
            continue;
        };
        if let (Some(required), Some(actual)) = (spec.src_gender, genders[e.src]) {
            if required != actual {
                out.push(Violation::GenderMismatch {
                    entity: names[e.src].clone(),
                    relation: spec.name.clone(),
                });
            }
        }
        match spec.role {
            Some(RelationRole::Parent) => {
                parents[e.dst].insert(e.src);
                children[e.src].push(e.dst);
            }
            Some(RelationRole::Sibling) => siblings.push((e.src, e.dst)),
            None => {}
        }
    }

    // Parent links must form a DAG: Kahn's algorithm leaves cycle members.
    let mut indeg: Vec<usize> = parents.iter().map(BTreeSet::len).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut removed = 0;
    while let Some(u) = queue.pop_front() {
        removed += 1;
        for &c in &children[u] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    if removed < n {
        let through = (0..n).find(|&i| indeg[i] > 0).map(|i| names[i].clone()).unwrap_or_default();
        out.push(Violation::ParentCycle { through });
        return;
    }

    for (c, ps) in parents.iter().enumerate() {
        if ps.len() > 2 {
            out.push(Violation::TooManyParents {
                child: names[c].clone(),
                count: ps.len(),
            });
        } else if ps.len() == 2 {
            let g: Vec<_> = ps.iter().map(|&p| genders[p]).collect();
            if g[0].is_some() && g[0] == g[1] {
                out.push(Violation::SameGenderParents { child: names[c].clone() });
            }
        }
    }

    let ancestors = |start: usize| {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = parents[start].iter().copied().collect();
        while let Some(p) = stack.pop() {
            if seen.insert(p) {
                stack.extend(parents[p].iter().copied());
            }
        }
        seen
    };
    for (a, b) in siblings {
        if parents[a] != parents[b] {
            out.push(Violation::InconsistentParentage {
                a: names[a].clone(),
                b: names[b].clone(),
            });
        }
        if ancestors(a).contains(&b) || ancestors(b).contains(&a) {
            out.push(Violation::SiblingIsAncestor {
                a: names[a].clone(),
                b: names[b].clone(),
            });
        }
    }
}

/// Every relation type is one line; its edges must form one directed simple path.
fn check_lines(graph: &RelationalGraph, out: &mut Vec<Violation>) {
    for (r, name) in graph.relation_types().iter().enumerate() {
        let edges: Vec<_> = graph.edges().iter().filter(|e| e.rel == r).collect();
        if edges.is_empty() {
            continue;
        }
        let mut outdeg: HashMap<usize, usize> = HashMap::new();
        let mut indeg: HashMap<usize, usize> = HashMap::new();
        let mut nodes = BTreeSet::new();
        for e in &edges {
            *outdeg.entry(e.src).or_default() += 1;
            *indeg.entry(e.dst).or_default() += 1;
            nodes.insert(e.src);
            nodes.insert(e.dst);
        }
        let degrees_ok = outdeg.values().all(|&d| d <= 1) && indeg.values().all(|&d| d <= 1);
        // A forest of directed paths has |E| = |V| - #components; one path
        // means exactly one start node (in-degree 0).
        let starts = nodes.iter().filter(|v| !indeg.contains_key(v)).count();
        if !degrees_ok || edges.len() + 1 != nodes.len() || starts != 1 {
            out.push(Violation::LineNotPath { line: name.clone() });
        }
    }
}
