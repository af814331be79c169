//! Evaluation, controls, alignment, steering, QA correlation and PCA.

pub mod align;
pub mod baselines;
pub mod eval;
pub mod pca;
pub mod qa;
pub mod steer;

pub use align::{alignment_matrix, model_space_prototypes, span_alignment, subspace_alignment, Alignment};
pub use baselines::{randomize_activations, run_baselines, run_control, shuffle_labels, BaselineInputs, Control};
pub use eval::{eval_probe, existence_rho, type_rho, Condition, EvalOptions, EvalReport, GraphScore, TypeIndexSet};
pub use pca::{pca_projection, PcaProjection};
pub use qa::{normalize_within_graph, probe_errors, qa_correlation, LogitRecord, ProbeErrors, QaCorrelation, QaObservation};
pub use steer::{decode_steering, encode_steering, read_steering, steering_vector, write_steering, SteeringVector};
