use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{draw_entities, MAX_ATTEMPTS};
use crate::error::{Error, Result};
use crate::graph::{Edge, RelationalGraph};
use crate::schema::DomainSchema;

/// A grid-sampled graph together with the lattice position of every entity
/// (canonical entity order, raw sampler axes).
#[derive(Clone, Debug)]
pub struct GridLayout {
    pub graph: RelationalGraph,
    pub positions: Vec<Vec<i64>>,
}

/// Grid-based Euclidean sampler: grow `n` occupied cells of `Z^dims` by
/// signed unit steps, then connect every ordered pair at a positive unit
/// offset with the relation type bound to that axis.
///
/// Relation types are the first `dims` directional types of the schema;
/// entity names come from the ID or OOD pool.
pub fn sample_grid_graph<R: Rng + ?Sized>(
    schema: &DomainSchema,
    ood_entities: bool,
    n: usize,
    dims: usize,
    rng: &mut R,
) -> Result<GridLayout> {
    if n < 2 || !(1..=2).contains(&dims) {
        return Err(Error::Config(format!("grid sampler needs n >= 2 and dims in 1..=2, got n={n}, dims={dims}")));
    }
    let types: Vec<String> = schema
        .relation_specs
        .iter()
        .filter(|s| s.directional)
        .take(dims)
        .map(|s| s.name.clone())
        .collect();
    if types.len() < dims {
        return Err(Error::InvalidSchema(format!(
            "{} has {} directional relations, grid needs {dims}",
            schema.domain,
            types.len()
        )));
    }
    let entity_ids = draw_entities(schema, ood_entities, n, rng)?;

    let mut positions: Vec<Vec<i64>> = vec![vec![0; dims]];
    let mut occupied: HashSet<Vec<i64>> = positions.iter().cloned().collect();
    let mut attempts = 0;
    while positions.len() < n {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::SamplingFailed {
                what: format!("grid growth to {n} cells"),
                attempts: MAX_ATTEMPTS,
            });
        }
        let x = positions[rng.random_range(0..positions.len())].clone();
        let axis = rng.random_range(0..dims);
        let step = if rng.random_bool(0.5) { 1 } else { -1 };
        let mut y = x;
        y[axis] += step;
        if occupied.insert(y.clone()) {
            positions.push(y);
        }
    }

    // f: cell -> entity, as a uniform shuffle of the canonical entity slots.
    let mut slot_of_cell: Vec<usize> = (0..n).collect();
    slot_of_cell.shuffle(rng);
    let mut entity_pos = vec![Vec::new(); n];
    for (cell, &slot) in slot_of_cell.iter().enumerate() {
        entity_pos[slot] = positions[cell].clone();
    }
    // g: axis -> relation type.
    let mut type_of_axis: Vec<usize> = (0..dims).collect();
    type_of_axis.shuffle(rng);

    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let delta: Vec<i64> = entity_pos[j].iter().zip(&entity_pos[i]).map(|(a, b)| a - b).collect();
            let nonzero: Vec<usize> = (0..dims).filter(|&a| delta[a] != 0).collect();
            if let [axis] = nonzero[..] {
                if delta[axis] == 1 {
                    edges.push(Edge::new(i, j, type_of_axis[axis]));
                }
            }
        }
    }
    let pool = schema.pool(ood_entities);
    let graph = RelationalGraph::new(
        schema.domain,
        entity_ids.iter().map(|&i| pool[i].clone()).collect(),
        types,
        edges,
    )?;
    Ok(GridLayout {
        graph,
        positions: entity_pos,
    })
}

pub fn sample_ordinality_graph<R: Rng + ?Sized>(
    schema: &DomainSchema,
    ood_entities: bool,
    n: usize,
    rng: &mut R,
) -> Result<RelationalGraph> {
    Ok(sample_grid_graph(schema, ood_entities, n, 1, rng)?.graph)
}

pub fn sample_spatial_graph<R: Rng + ?Sized>(
    schema: &DomainSchema,
    ood_entities: bool,
    n: usize,
    rng: &mut R,
) -> Result<RelationalGraph> {
    Ok(sample_grid_graph(schema, ood_entities, n, 2, rng)?.graph)
}

pub fn sample_thematic_graph<R: Rng + ?Sized>(
    schema: &DomainSchema,
    ood_entities: bool,
    n: usize,
    rng: &mut R,
) -> Result<RelationalGraph> {
    Ok(sample_grid_graph(schema, ood_entities, n, 2, rng)?.graph)
}
