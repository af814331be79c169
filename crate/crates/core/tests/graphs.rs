mod common;

use std::collections::BTreeSet;

use common::{bfs_distances, graph_bfs, grid_placement_exists, has_cycle};
use polarprobe::gen::{
    build_dataset, sample_family_tree, sample_grid_graph, sample_metro_map, write_jsonl, DatasetSpec, Split,
};
use polarprobe::graph::{
    incidence_tensor, shortest_path_distances, validate_graph, Domain, Edge, RelationalGraph,
};
use polarprobe::rng::stream;
use polarprobe::schema::{DomainSchema, RelationRole};
use proptest::prelude::*;

fn sample(domain: Domain, schema: &DomainSchema, n: usize, seed: u64) -> RelationalGraph {
    let mut rng = stream(seed, &[domain as u64]);
    match domain {
        Domain::Ordinality => sample_grid_graph(schema, false, n, 1, &mut rng).unwrap().graph,
        Domain::Spatial | Domain::Thematic => sample_grid_graph(schema, false, n, 2, &mut rng).unwrap().graph,
        Domain::Family => sample_family_tree(schema, false, n.max(3), &mut rng).unwrap(),
        Domain::Metro => sample_metro_map(schema, false, 2, n.max(5), &mut rng).unwrap(),
    }
}

fn assert_matches_bfs(g: &RelationalGraph) {
    let got = shortest_path_distances(g).unwrap();
    let want = graph_bfs(g);
    for i in 0..g.n() {
        for j in 0..g.n() {
            assert_eq!(Some(got.get(i, j)), want[i][j], "pair ({i}, {j}) of {g:?}");
        }
    }
}

#[test]
fn two_line_metro_distances_go_through_the_hub() {
    let schema = DomainSchema::builtin(Domain::Metro);
    for seed in 0..50 {
        let g = sample_metro_map(&schema, false, 2, 6, &mut stream(seed, &[])).unwrap();
        assert_eq!(g.n(), 6);
        assert_matches_bfs(&g);
        // The hub is the one stop touched by both line types.
        let lines_at = |v: usize| -> BTreeSet<usize> {
            g.edges().iter().filter(|e| e.src == v || e.dst == v).map(|e| e.rel).collect()
        };
        let hub = (0..6).find(|&v| lines_at(v).len() == 2).expect("a transfer hub");
        let d = shortest_path_distances(&g).unwrap();
        let ends = |rel: usize| -> Vec<usize> {
            (0..6)
                .filter(|&v| g.edges().iter().filter(|e| e.rel == rel && (e.src == v || e.dst == v)).count() == 1)
                .collect()
        };
        for a in ends(0) {
            for b in ends(1) {
                assert_eq!(d.get(a, b), d.get(a, hub) + d.get(hub, b));
            }
        }
    }
}

#[test]
fn family_of_four_incidence_matches_enumeration() {
    let schema = DomainSchema::builtin(Domain::Family);
    let rels: Vec<String> = ["mom of", "dad of", "sibling of"].map(String::from).to_vec();
    // Amelia and James are parents of Henry and Alice, who are siblings.
    let names: Vec<String> = ["James", "Henry", "Amelia", "Alice"].map(String::from).to_vec();
    let edges: Vec<Edge> = [[2, 1, 0], [2, 3, 0], [0, 1, 1], [0, 3, 1], [1, 3, 2]].map(Edge::from).to_vec();
    let g = RelationalGraph::new(Domain::Family, names, rels, edges).unwrap();
    assert!(validate_graph(&g, &schema).is_valid(), "{:?}", validate_graph(&g, &schema));
    let directional = schema.directional_types(&g);
    assert_eq!(directional, vec![0, 1]);
    let m = incidence_tensor(&g, &directional);
    for i in 0..4 {
        for j in 0..4 {
            for r in 0..3 {
                let want = if directional.contains(&r) {
                    let fwd = g.edges().iter().any(|e| (e.src, e.dst, e.rel) == (i, j, r));
                    let back = g.edges().iter().any(|e| (e.src, e.dst, e.rel) == (j, i, r));
                    fwd as i8 - back as i8
                } else {
                    0
                };
                assert_eq!(m.get(i, j, r), want, "({i}, {j}, {r})");
            }
        }
    }
    // The sibling edge still counts as a hop.
    assert_eq!(shortest_path_distances(&g).unwrap().get(1, 3), 1);
}

#[test]
fn family_trees_have_acyclic_parentage() {
    let schema = DomainSchema::builtin(Domain::Family);
    for seed in 0..200 {
        let g = sample_family_tree(&schema, false, 6, &mut stream(seed, &[7])).unwrap();
        assert_matches_bfs(&g);
        let links: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .filter(|e| schema.relation(&g.relation_types()[e.rel], false).unwrap().role == Some(RelationRole::Parent))
            .map(|e| (e.src, e.dst))
            .collect();
        assert!(!has_cycle(g.n(), &links));
    }
}

#[test]
fn family_sample_with_seed_seven() {
    let schema = DomainSchema::builtin(Domain::Family);
    let g = sample_family_tree(&schema, false, 6, &mut stream(7, &[])).unwrap();
    assert_matches_bfs(&g);
    assert!(validate_graph(&g, &schema).is_valid());
}

#[test]
fn parent_cycle_oracle_agrees_with_validation() {
    let schema = DomainSchema::builtin(Domain::Family);
    let rels = vec!["mom of".to_string()];
    let names: Vec<String> = ["Amelia", "Alice", "Grace"].map(String::from).to_vec();
    let g = RelationalGraph::new(Domain::Family, names, rels, vec![[0, 1, 0].into(), [1, 2, 0].into(), [2, 0, 0].into()])
        .unwrap();
    assert!(has_cycle(3, &[(0, 1), (1, 2), (2, 0)]));
    assert!(validate_graph(&g, &schema).has("parent cycle"));
}

#[test]
fn grid_embedding_verdict_matches_exhaustive_placement() {
    let schema = DomainSchema::builtin(Domain::Spatial);
    let rels: Vec<String> = schema.relation_specs.iter().take(2).map(|s| s.name.clone()).collect();
    let mut rng = stream(3, &[]);
    let mut seen = [0usize; 2];
    use rand::Rng;
    for _ in 0..400 {
        let n = rng.random_range(2..=6);
        let names: Vec<String> = schema.entity_pool[..n].to_vec();
        // A random spanning tree plus a few extra random edges.
        let mut edges = Vec::new();
        for v in 1..n {
            let u = rng.random_range(0..v);
            let (s, d) = if rng.random_bool(0.5) { (u, v) } else { (v, u) };
            edges.push(Edge::new(s, d, rng.random_range(0..2)));
        }
        for _ in 0..rng.random_range(0..3) {
            let (s, d) = (rng.random_range(0..n), rng.random_range(0..n));
            let e = Edge::new(s, d, rng.random_range(0..2));
            if s != d && !edges.contains(&e) {
                edges.push(e);
            }
        }
        let Ok(g) = RelationalGraph::new(Domain::Spatial, names, rels.clone(), edges) else {
            continue;
        };
        let triples: Vec<(usize, usize, usize)> = g.edges().iter().map(|e| (e.src, e.dst, e.rel)).collect();
        let exists = grid_placement_exists(n, 2, &triples);
        let report = validate_graph(&g, &schema);
        assert_eq!(!report.has("no grid embedding"), exists, "{g:?}");
        seen[exists as usize] += 1;
    }
    assert!(seen[0] > 20 && seen[1] > 20, "{seen:?}");
}

#[test]
fn left_of_both_ways_has_no_placement() {
    let schema = DomainSchema::builtin(Domain::Spatial);
    let rels = vec!["to the right of".to_string()];
    let names: Vec<String> = schema.entity_pool[..2].to_vec();
    let g = RelationalGraph::new(Domain::Spatial, names, rels, vec![[0, 1, 0].into(), [1, 0, 0].into()]).unwrap();
    assert!(!grid_placement_exists(2, 2, &[(0, 1, 0), (1, 0, 0)]));
    assert!(validate_graph(&g, &schema).has("no grid embedding"));
}

#[test]
fn five_cells_seed_42_edges_are_adjacent_pairs() {
    let schema = DomainSchema::builtin(Domain::Spatial);
    let layout = sample_grid_graph(&schema, false, 5, 2, &mut stream(42, &[])).unwrap();
    let p = &layout.positions;
    let mut adjacent = 0;
    for i in 0..5 {
        for j in 0..5 {
            let diff: Vec<i64> = (0..2).map(|a| p[j][a] - p[i][a]).collect();
            if diff.iter().map(|x| x.abs()).sum::<i64>() == 1 && diff.iter().sum::<i64>() == 1 {
                adjacent += 1;
            }
        }
    }
    assert_eq!(layout.graph.edges().len(), adjacent);
}

#[test]
fn generated_graphs_validate_and_match_bfs() {
    for domain in Domain::ALL {
        let schema = DomainSchema::builtin(domain);
        for seed in 0..100 {
            let g = sample(domain, &schema, DatasetSpec::default_entities(domain), seed);
            assert!(validate_graph(&g, &schema).is_valid(), "{domain} seed {seed}");
            assert_matches_bfs(&g);
        }
    }
}

#[test]
fn bfs_oracle_reports_unreachable_pairs() {
    let d = bfs_distances(3, &[(0, 1)]);
    assert_eq!(d[0][1], Some(1));
    assert_eq!(d[0][2], None);
}

#[test]
fn ood_entities_avoid_the_id_pool() {
    for domain in Domain::ALL {
        let schema = DomainSchema::builtin(domain);
        let mut spec = common::spec(domain, 1, [(3, 1), (3, 1), (10, 1)]);
        spec.ood.entities = true;
        let ds = build_dataset(&spec, &schema, None).unwrap();
        let id: BTreeSet<&String> = schema.entity_pool.iter().collect();
        for e in ds.split(Split::Test) {
            assert!(e.graph.entities().iter().all(|n| !id.contains(n)), "{domain}");
        }
        for e in ds.split(Split::Train) {
            assert!(e.graph.entities().iter().all(|n| id.contains(n)), "{domain}");
        }
    }
}

#[test]
fn splits_share_no_labeled_graph() {
    for domain in Domain::ALL {
        let schema = DomainSchema::builtin(domain);
        let spec = common::spec(domain, 4, [(30, 1), (50, 1), (50, 1)]);
        let ds = build_dataset(&spec, &schema, None).unwrap();
        let key = |g: &RelationalGraph| -> BTreeSet<(String, String, String)> {
            g.edges()
                .iter()
                .map(|e| {
                    (g.entities()[e.src].clone(), g.entities()[e.dst].clone(), g.relation_types()[e.rel].clone())
                })
                .collect()
        };
        let train: BTreeSet<_> = ds.split(Split::Train).map(|e| key(&e.graph)).collect();
        for e in ds.split(Split::Test).chain(ds.split(Split::Validation)) {
            assert!(!train.contains(&key(&e.graph)), "{domain}: {} repeats a training graph", e.graph_id);
        }
    }
}

#[test]
fn same_seed_same_bytes() {
    let schema = DomainSchema::builtin(Domain::Thematic);
    let spec = common::spec(Domain::Thematic, 9, [(5, 3), (5, 3), (5, 3)]);
    let a = write_jsonl(build_dataset(&spec, &schema, None).unwrap().records(None)).unwrap();
    let b = write_jsonl(build_dataset(&spec, &schema, None).unwrap().records(None)).unwrap();
    assert_eq!(a, b);
    let mut other = spec.clone();
    other.seed = 10;
    let c = write_jsonl(build_dataset(&other, &schema, None).unwrap().records(None)).unwrap();
    assert_ne!(a, c);
}

fn random_graph() -> impl Strategy<Value = RelationalGraph> {
    (2usize..8, 1usize..4).prop_flat_map(|(n, t)| {
        proptest::collection::btree_set((0..n, 0..n, 0..t), 0..(n * n))
            .prop_map(move |set| {
                let edges: Vec<Edge> =
                    set.into_iter().filter(|(s, d, _)| s != d).map(|(s, d, r)| Edge::new(s, d, r)).collect();
                let ents: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
                let rels: Vec<String> = (0..t).map(|r| format!("r{r}")).collect();
                RelationalGraph::new(Domain::Metro, ents, rels, edges)
            })
            .prop_filter_map("constructor rejected", Result::ok)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn incidence_is_antisymmetric(g in random_graph(), mask in proptest::collection::vec(any::<bool>(), 3)) {
        let directional: Vec<usize> = (0..g.t()).filter(|&r| mask[r]).collect();
        let m = incidence_tensor(&g, &directional);
        for i in 0..g.n() {
            for j in 0..g.n() {
                for r in 0..g.t() {
                    prop_assert_eq!(m.get(i, j, r), -m.get(j, i, r));
                    let expected = directional.contains(&r) && g.has_edge(i, j, r) && !g.has_edge(j, i, r);
                    prop_assert_eq!(m.get(i, j, r) == 1, expected);
                }
            }
        }
    }

    #[test]
    fn distances_match_bfs_or_report_disconnection(g in random_graph()) {
        let oracle = graph_bfs(&g);
        let connected = oracle.iter().flatten().all(Option::is_some);
        match shortest_path_distances(&g) {
            Ok(d) => {
                prop_assert!(connected);
                for i in 0..g.n() {
                    for j in 0..g.n() {
                        prop_assert_eq!(Some(d.get(i, j)), oracle[i][j]);
                    }
                }
            }
            Err(_) => prop_assert!(!connected),
        }
    }
}
