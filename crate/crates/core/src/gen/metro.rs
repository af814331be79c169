use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::draw_entities;
use crate::error::{Error, Result};
use crate::graph::{Edge, RelationalGraph};
use crate::schema::DomainSchema;

fn min_stops(n_lines: usize) -> usize {
    match n_lines {
        1 => 2,
        // every line needs an interior stop for each hub it carries
        2 => 5,
        _ => 9,
    }
}

/// Samples a metro map of `n_lines` simple-path lines over `n_stops`
/// distinct stops. Every pair of lines shares one transfer hub placed at an
/// interior stop of both lines; all other stops belong to a single line.
///
/// Relation type `l` is "one stop after on line l": edge `(s_{k+1}, s_k, l)`
/// for consecutive stops of line `l`.
pub fn sample_metro_map<R: Rng + ?Sized>(
    schema: &DomainSchema,
    ood_entities: bool,
    n_lines: usize,
    n_stops: usize,
    rng: &mut R,
) -> Result<RelationalGraph> {
    if !(1..=3).contains(&n_lines) {
        return Err(Error::Config(format!("metro maps need 1..=3 lines, got {n_lines}")));
    }
    if n_stops < min_stops(n_lines) || n_stops > 13 {
        return Err(Error::Config(format!(
            "{n_lines} lines need {}..=13 stops, got {n_stops}",
            min_stops(n_lines)
        )));
    }
    let specs = schema.relation_specs(false);
    if specs.len() < n_lines {
        return Err(Error::InvalidSchema(format!("schema has {} lines, need {n_lines}", specs.len())));
    }
    let entity_ids = draw_entities(schema, ood_entities, n_stops, rng)?;

    let hubs = n_lines * (n_lines - 1) / 2;
    let min_len = if n_lines == 1 { 2 } else { n_lines + 1 };
    // Line lengths sum to the stop count plus one per hub (hubs are shared by two lines).
    let total = n_stops + hubs;
    let compositions: Vec<Vec<usize>> = compositions(total, n_lines, min_len);
    let lengths = compositions.choose(rng).expect("stop count admits a composition").clone();

    // Stop ids 0..n_stops, hubs first; shuffled into canonical slots at the end.
    let mut next_stop = hubs;
    let hub_of = |a: usize, b: usize| {
        let (a, b) = (a.min(b), a.max(b));
        // index of pair (a, b) among pairs of lines
        (0..a).map(|i| n_lines - 1 - i).sum::<usize>() + (b - a - 1)
    };
    let mut lines: Vec<Vec<usize>> = Vec::with_capacity(n_lines);
    for (l, &len) in lengths.iter().enumerate() {
        let my_hubs: Vec<usize> = (0..n_lines).filter(|&o| o != l).map(|o| hub_of(l, o)).collect();
        let mut interior: Vec<usize> = (1..len - 1).collect();
        interior.shuffle(rng);
        let mut line = vec![usize::MAX; len];
        for (slot, hub) in interior.iter().zip(&my_hubs) {
            line[*slot] = *hub;
        }
        for stop in line.iter_mut().filter(|s| **s == usize::MAX) {
            *stop = next_stop;
            next_stop += 1;
        }
        lines.push(line);
    }
    debug_assert_eq!(next_stop, n_stops);

    let mut slot: Vec<usize> = (0..n_stops).collect();
    slot.shuffle(rng);
    let mut edges: Vec<Edge> = lines
        .iter()
        .enumerate()
        .flat_map(|(l, line)| line.windows(2).map(move |w| (l, w[0], w[1])))
        .map(|(l, before, after)| Edge::new(slot[after], slot[before], l))
        .collect();
    edges.sort();
    let pool = schema.pool(ood_entities);
    RelationalGraph::new(
        schema.domain,
        entity_ids.iter().map(|&i| pool[i].clone()).collect(),
        specs[..n_lines].iter().map(|s| s.name.clone()).collect(),
        edges,
    )
}

/// All ordered ways to write `total` as `parts` summands, each `>= min`.
fn compositions(total: usize, parts: usize, min: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return if total >= min { vec![vec![total]] } else { vec![] };
    }
    (min..=total.saturating_sub(min * (parts - 1)))
        .flat_map(|first| {
            compositions(total - first, parts - 1, min).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{shortest_path_distances, validate_graph, Domain};
    use crate::rng::stream;

    #[test]
    fn single_line_is_a_chain() {
        let schema = DomainSchema::builtin(Domain::Metro);
        let g = sample_metro_map(&schema, false, 1, 3, &mut stream(1, &[])).unwrap();
        let d = shortest_path_distances(&g).unwrap();
        let mut all: Vec<u32> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| d.get(i, j)).collect();
        all.sort();
        assert_eq!(all, vec![0, 0, 0, 1, 1, 1, 1, 2, 2]);
    }

    #[test]
    fn maps_validate_for_all_line_counts() {
        let schema = DomainSchema::builtin(Domain::Metro);
        for (lines, stops) in [(1, 2), (2, 5), (2, 6), (2, 13), (3, 9), (3, 13)] {
            for seed in 0..40 {
                let g = sample_metro_map(&schema, false, lines, stops, &mut stream(seed, &[])).unwrap();
                assert_eq!(g.n(), stops);
                assert_eq!(g.t(), lines);
                let report = validate_graph(&g, &schema);
                assert!(report.is_valid(), "{lines}/{stops} seed {seed}: {report:?}");
            }
        }
    }

    #[test]
    fn hub_has_degree_four_on_two_lines() {
        let schema = DomainSchema::builtin(Domain::Metro);
        let g = sample_metro_map(&schema, false, 2, 7, &mut stream(9, &[])).unwrap();
        let adj = g.undirected_adjacency();
        assert_eq!(adj.iter().filter(|a| a.len() == 4).count(), 1);
        assert_eq!(g.edges().len(), 7 + 1 - 2);
    }

    #[test]
    fn compositions_enumerate() {
        assert_eq!(compositions(7, 2, 3), vec![vec![3, 4], vec![4, 3]]);
        assert!(compositions(5, 2, 3).is_empty());
    }

    #[test]
    fn rejects_too_few_stops() {
        let schema = DomainSchema::builtin(Domain::Metro);
        assert!(sample_metro_map(&schema, false, 2, 4, &mut stream(0, &[])).is_err());
        assert!(sample_metro_map(&schema, false, 3, 8, &mut stream(0, &[])).is_err());
    }
}
