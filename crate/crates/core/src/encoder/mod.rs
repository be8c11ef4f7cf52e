//! Acoustic-view and written-view encoders.
//!
//! The acoustic view is a stack of bidirectional GRU layers over the feature
//! frames of a whole utterance; a segment embedding pools the states inside
//! the segment window, so it depends on the surrounding context. The written
//! view encodes a word's phone sequence (word stage) or a sequence of word
//! embeddings (span stage) with one bidirectional GRU and concat pooling.

mod backprop;
mod checkpoint;
mod gru;
mod model;
mod pooling;
mod stack;
mod tensor;
mod written;

pub use backprop::{embed_batch, loss_and_gradients, BatchEmbeddings, EmbeddingGradients, SegmentRequest};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, fingerprint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use gru::{BiGru, GruCell};
pub use model::{Architecture, EmbeddingModel, Stage, StateMatrix};
pub use pooling::{pool, pool_backward, Pooling};
pub use stack::RecurrentStack;
pub use tensor::{to_f32_grid, Parameters, Tensor};
pub use written::{PhoneEncoder, SpanEncoder};
