//! Quality-rating and annotator-disagreement prediction for code-mixed
//! (Hinglish) sentence triplets.
//!
//! The pipeline mean-pools token embeddings for the English, Hindi and
//! Hinglish sentences of each instance, concatenates the three sentence
//! vectors, and classifies them with a deterministic multiclass
//! gradient-boosted tree ensemble. Predictions are scored with weighted F1,
//! Cohen's kappa and mean squared error.

pub mod corpus;
pub mod embedding;
pub mod gbdt;
pub mod label;
pub mod metrics;
pub mod rng;

pub use label::Label;
