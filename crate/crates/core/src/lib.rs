//! Query-by-example speech search with contextual acoustic word and span
//! embeddings.
//!
//! The pipeline trains a bidirectional recurrent acoustic encoder jointly with
//! a written-view encoder under a multi-view contrastive loss, indexes a search
//! collection by pooling encoder states over sliding windows, scores spoken
//! queries by maximum cosine similarity, and evaluates the result against a
//! frame-level DTW baseline.

pub mod augment;
pub mod corpus;
pub mod dtw;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod objective;
pub mod search;
pub mod spans;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
