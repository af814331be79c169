//! Independent oracles shared by the integration tests. Nothing here calls
//! the code paths it is used to check.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use nalgebra::DMatrix;
use polarprobe::acts::ActivationRecord;
use polarprobe::gen::{build_dataset, DatasetSpec, GraphEntry, Split, SplitSize};
use polarprobe::graph::{Domain, RelationalGraph};
use polarprobe::planted::{plant_embeddings, random_embeddings, PlantedLayout, PlantedSpace};
use polarprobe::probe::{PolarProbe, ProbeData};
use polarprobe::rng::stream;
use polarprobe::schema::{DomainSchema, Gender, RelationSpec, Surface};

/// Hop counts by breadth-first search from every source over the undirected
/// skeleton; `None` marks unreachable pairs.
pub fn bfs_distances(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<Option<u32>>> {
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in edges {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    (0..n)
        .map(|s| {
            let mut dist = vec![None; n];
            dist[s] = Some(0);
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for v in 0..n {
                    if adj[u][v] && dist[v].is_none() {
                        dist[v] = Some(dist[u].unwrap() + 1);
                        q.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

pub fn graph_bfs(g: &RelationalGraph) -> Vec<Vec<Option<u32>>> {
    let edges: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.src, e.dst)).collect();
    bfs_distances(g.n(), &edges)
}

/// Depth-first search for a directed cycle in `parent -> child` links.
pub fn has_cycle(n: usize, links: &[(usize, usize)]) -> bool {
    fn visit(u: usize, children: &[Vec<usize>], state: &mut [u8]) -> bool {
        state[u] = 1;
        for &c in &children[u] {
            if state[c] == 1 || (state[c] == 0 && visit(c, children, state)) {
                return true;
            }
        }
        state[u] = 2;
        false
    }
    let mut children = vec![Vec::new(); n];
    for &(p, c) in links {
        children[p].push(c);
    }
    let mut state = vec![0u8; n];
    (0..n).any(|u| state[u] == 0 && visit(u, &children, &mut state))
}

/// Exhaustive search for distinct integer cells with
/// `cell[dst] - cell[src] = e_rel` for every edge, inside a box wide enough
/// for any connected placement of `n` cells.
pub fn grid_placement_exists(n: usize, dims: usize, edges: &[(usize, usize, usize)]) -> bool {
    let r = n as i64;
    let cells: Vec<Vec<i64>> = if dims == 1 {
        (-r..=r).map(|x| vec![x]).collect()
    } else {
        (-r..=r).flat_map(|x| (-r..=r).map(move |y| vec![x, y])).collect()
    };
    fn place(
        k: usize,
        n: usize,
        cells: &[Vec<i64>],
        edges: &[(usize, usize, usize)],
        pos: &mut Vec<Vec<i64>>,
    ) -> bool {
        if k == n {
            return true;
        }
        let candidates: Vec<&Vec<i64>> = if k == 0 { vec![&cells[cells.len() / 2]] } else { cells.iter().collect() };
        for c in candidates {
            if pos.contains(c) {
                continue;
            }
            pos.push(c.clone());
            let ok = edges.iter().all(|&(s, d, rel)| {
                if s > k || d > k {
                    return true;
                }
                (0..pos[s].len()).all(|a| pos[d][a] - pos[s][a] == if a == rel { 1 } else { 0 })
            });
            if ok && place(k + 1, n, cells, edges, pos) {
                return true;
            }
            pos.pop();
        }
        false
    }
    place(0, n, &cells, edges, &mut Vec::new())
}

/// Recovers `(src, dst, relation name)` triples from a rendered description
/// by matching every sentence against every template of the schema (ID and
/// OOD, forward and inverse, both genders) for every ordered entity pair.
/// Gendered templates only match when the subject has that gender, parent
/// relations only when the source has the parent gender, and symmetric
/// relations are returned with the smaller index first. Panics when a
/// sentence matches nothing or more than one reading.
pub fn parse_description(text: &str, entities: &[String], schema: &DomainSchema) -> BTreeSet<(usize, usize, String)> {
    let lines: Vec<&str> = text.lines().collect();
    let body = lines[lines.len() - 2];
    let mut readings: Vec<(&RelationSpec, bool, &str, Option<Gender>)> = Vec::new();
    for spec in schema.relation_specs.iter().chain(&schema.relation_specs_ood) {
        for (surface, inverse) in [(&spec.forward, false), (&spec.inverse, true)] {
            match surface {
                Surface::Plain(t) => readings.push((spec, inverse, t, None)),
                Surface::Gendered { male, female } => {
                    readings.push((spec, inverse, male, Some(Gender::Male)));
                    readings.push((spec, inverse, female, Some(Gender::Female)));
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for sentence in body.split_inclusive(". ").map(|s| s.trim_end().trim_end_matches('.')) {
        let mut found = BTreeSet::new();
        for (s, src) in entities.iter().enumerate() {
            for (d, dst) in entities.iter().enumerate() {
                if s == d {
                    continue;
                }
                for (spec, inverse, template, gender) in &readings {
                    let subject = if *inverse { dst } else { src };
                    if gender.is_some() && schema.gender_of(subject) != *gender {
                        continue;
                    }
                    if spec.src_gender.is_some() && schema.gender_of(src) != spec.src_gender {
                        continue;
                    }
                    if template.replace("{src}", src).replace("{dst}", dst) == sentence {
                        let (a, b) = if spec.directional { (s, d) } else { (s.min(d), s.max(d)) };
                        found.insert((a, b, spec.name.clone()));
                    }
                }
            }
        }
        assert_eq!(found.len(), 1, "sentence {sentence:?} has readings {found:?}");
        out.extend(found);
    }
    out
}

/// Entity listing of the final line, in order of appearance.
pub fn post_prompt_order(text: &str, entities: &[String]) -> Vec<usize> {
    let last = text.lines().last().unwrap();
    let words: Vec<&str> = last
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    words.iter().filter_map(|w| entities.iter().position(|e| e == w)).collect()
}

/// Double-loop recomputation of the probe outputs:
/// (distances n×n, cosines n×n×t as `[i][j][r]`).
pub fn naive_outputs(b: &DMatrix<f64>, protos: &DMatrix<f64>, h: &DMatrix<f64>) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let (n, k, t) = (h.nrows(), b.nrows(), protos.ncols());
    let z: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..k).map(|a| (0..h.ncols()).map(|c| b[(a, c)] * h[(i, c)]).sum()).collect())
        .collect();
    let mut dist = vec![vec![0.0; n]; n];
    let mut cos = vec![vec![vec![0.0; t]; n]; n];
    for i in 0..n {
        for j in 0..n {
            let delta: Vec<f64> = (0..k).map(|a| z[i][a] - z[j][a]).collect();
            let dn = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
            dist[i][j] = dn;
            for r in 0..t {
                let pn = (0..k).map(|a| protos[(a, r)].powi(2)).sum::<f64>().sqrt();
                let dot: f64 = (0..k).map(|a| delta[a] * protos[(a, r)]).sum();
                cos[i][j][r] = dot / (dn * pn).max(1e-8);
            }
        }
    }
    (dist, cos)
}

/// Angular loss by enumeration: every distinct directed pair that carries a
/// directional edge, every prototype column, squared error against the
/// signed indicator, divided by pairs × columns.
pub fn naive_angular(cos: &[Vec<Vec<f64>>], g: &RelationalGraph, directional: &[usize]) -> Option<f64> {
    let pairs: BTreeSet<(usize, usize)> = g
        .edges()
        .iter()
        .filter(|e| directional.contains(&e.rel))
        .map(|e| (e.src, e.dst))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for &(i, j) in &pairs {
        for (c, &r) in directional.iter().enumerate() {
            let gold = g.has_edge(i, j, r) as i32 as f64 - g.has_edge(j, i, r) as i32 as f64;
            sum += (cos[i][j][c] - gold).powi(2);
        }
    }
    Some(sum / (pairs.len() * directional.len()) as f64)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = stream(seed, &[0xfeed]);
    DMatrix::from_fn(rows, cols, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng))
}

pub fn probe_from(b: DMatrix<f64>, p: DMatrix<f64>) -> PolarProbe {
    PolarProbe::new(b, p).unwrap()
}

/// Small spec with the given split sizes.
pub fn spec(domain: Domain, seed: u64, sizes: [(usize, usize); 3]) -> DatasetSpec {
    let mut s = DatasetSpec::new(domain, seed);
    let [tr, va, te] = sizes.map(|(graphs, descriptions)| SplitSize { graphs, descriptions });
    s.train = tr;
    s.validation = va;
    s.test = te;
    s
}

pub enum Embedding {
    Planted { sigma: f64 },
    /// Planted with the truncated identity as mixing.
    Identity { sigma: f64 },
    Random,
}

/// Train, validation and test probe data for one domain with synthetic
/// activations of width `d`.
pub fn synthetic_data(spec: &DatasetSpec, d: usize, embedding: Embedding, seed: u64) -> [ProbeData; 3] {
    let schema = DomainSchema::builtin(spec.domain);
    let ds = build_dataset(spec, &schema, None).unwrap();
    let space = match embedding {
        Embedding::Planted { sigma } => Some(
            PlantedSpace::random(d, spec.domain.grid_dims().unwrap(), sigma, &mut stream(seed, &[1])).unwrap(),
        ),
        Embedding::Identity { sigma } => {
            Some(PlantedSpace::truncated_identity(d, spec.domain.grid_dims().unwrap(), sigma).unwrap())
        }
        Embedding::Random => None,
    };
    Split::ALL.map(|split| {
        let entries: Vec<&GraphEntry> = ds.split(split).collect();
        let mut records: Vec<ActivationRecord> = Vec::new();
        for (gi, e) in entries.iter().enumerate() {
            let mut rng = stream(seed, &[2, split as u64, gi as u64]);
            let layout = space.as_ref().map(|s| PlantedLayout::for_graph(&e.graph, s).unwrap());
            for s in &e.samples {
                records.push(match &layout {
                    Some(l) => plant_embeddings(&s.sample_id, 0, &e.graph, l, &mut rng).unwrap(),
                    None => random_embeddings(&s.sample_id, 0, &e.graph, d, &mut rng).unwrap(),
                });
            }
        }
        let by_id: HashMap<&str, &ActivationRecord> = records.iter().map(|r| (r.sample_id.as_str(), r)).collect();
        ProbeData::assemble(entries.iter().copied(), &by_id, &schema).unwrap()
    })
}
