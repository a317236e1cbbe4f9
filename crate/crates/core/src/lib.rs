//! Exemplar-based global explanations for node classifiers.
//!
//! Given a graph, the embeddings and the predicted labels of any black-box
//! node classifier, the crate
//!
//! 1. builds same-class reverse k-nearest-neighbor sets over the embeddings
//!    ([`knn`]),
//! 2. greedily picks per-class exemplars that maximize reverse-kNN coverage
//!    ([`coverage`]),
//! 3. summarizes node neighborhoods ([`summary`]) and synthesizes a boolean
//!    rule per exemplar through a feedback/refine loop ([`synth`]) written in
//!    a small sandboxed rule language ([`rules`]),
//! 4. scores the per-class disjunctions against the model's predictions
//!    ([`eval`]).

pub mod coverage;
pub mod eval;
pub mod graph;
pub mod knn;
pub mod rules;
pub mod summary;
pub mod synth;

pub use graph::{ClassId, NodeId};
