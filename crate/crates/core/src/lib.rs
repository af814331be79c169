//! Polar probes: decoding relational graphs from activation geometry.
//!
//! A probe maps per-entity activation vectors into a low-rank space where
//! the distance between two entities ranks their graph distance and the
//! direction of their difference names the relation type. This crate
//! generates the relational-graph datasets, reads and writes activation
//! containers, trains probes with analytic gradients, and runs the
//! evaluation, baseline, alignment, steering, QA-correlation and PCA
//! analyses.

pub mod acts;
pub mod analysis;
pub mod error;
pub mod gen;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod planted;
pub mod probe;
pub mod rng;
pub mod schema;
pub mod stats;
pub mod text;

pub use error::{Error, Result};
