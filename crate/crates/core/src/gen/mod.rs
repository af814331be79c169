//! Graph samplers for the five domains and dataset assembly.

mod dataset;
mod family;
mod grid;
mod metro;

pub use dataset::{
    build_dataset, read_jsonl, split_graphs, write_jsonl, Dataset, DatasetSpec, GraphEntry, OodFlags, SampleRecord,
    Split, SplitSize,
};
pub use family::sample_family_tree;
pub use grid::{sample_grid_graph, sample_ordinality_graph, sample_spatial_graph, sample_thematic_graph, GridLayout};
pub use metro::sample_metro_map;

use rand::Rng;

use crate::error::{Error, Result};
use crate::schema::DomainSchema;

/// Attempt budget for every rejection loop in the samplers.
pub const MAX_ATTEMPTS: usize = 10_000;

/// Draws `n` distinct pool indices, returned in pool order (the canonical
/// entity order of a graph).
pub(crate) fn draw_entities<R: Rng + ?Sized>(
    schema: &DomainSchema,
    ood_entities: bool,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let pool = schema.pool(ood_entities);
    if n > pool.len() {
        return Err(Error::PoolExhausted {
            requested: n,
            available: pool.len(),
        });
    }
    let mut idx = rand::seq::index::sample(rng, pool.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}
