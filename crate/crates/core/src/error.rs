use thiserror::Error;

use crate::graph::Domain;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected: no path between {a:?} and {b:?}")]
    Disconnected { a: String, b: String },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("{what}: gave up after {attempts} attempts")]
    SamplingFailed { what: String, attempts: usize },

    #[error("generation failed for {split} graph {index} (seed {seed}): {source}")]
    Generation {
        seed: u64,
        split: String,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("entity pool exhausted: {requested} entities requested, pool holds {available}")]
    PoolExhausted { requested: usize, available: usize },

    #[error("entity {0:?} is not a single token in the supplied vocabulary")]
    NotSingleToken(String),

    #[error("render error: {0}")]
    Render(String),

    #[error("query skipped: {0}")]
    QuerySkipped(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("dimension mismatch ({context}): expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("domain {0} is not Euclidean; planted embeddings need a grid domain")]
    UnsupportedDomain(Domain),

    #[error("need at least 3 entities for a rank correlation over pairs, got {0}")]
    InsufficientPairs(usize),

    #[error("non-finite loss at epoch {epoch} (graph {graph_id})")]
    NonFinite { epoch: usize, graph_id: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
