//! Embedding providers.
//!
//! Every provider maps a text to an [`EmbeddingVector`] tagged with a stable
//! provider id; the same id and input must always produce the same vector.
//! Three families ship here:
//!
//! - [`HashEmbedder`]: signed feature hashing over content tokens, the
//!   deterministic reference used in CI and the examples.
//! - [`PooledEmbedder`]: averages the contextual token vectors of a
//!   [`TokenEmbeddingBackend`] over the tokens a [`TokenFilter`] keeps.
//! - [`SentenceEmbedder`]: one vector per text from a
//!   [`SentenceModelAdapter`], local or behind an HTTP endpoint.
//!
//! [`TokenFilter`]: crate::text::TokenFilter

mod hashing;
mod pooled;
mod registry;
mod sentence;

pub use hashing::{reference_hash_embed, ContextHashBackend, HashEmbedder, DEFAULT_DIM};
pub use pooled::{pooled_contextual_embed, PooledEmbedder, TokenEmbeddingBackend};
pub use registry::ProviderRegistry;
pub use sentence::{
    sentence_embed, HttpSentenceAdapter, RecordedSentenceAdapter, RecordedVector,
    SentenceEmbedder, SentenceModelAdapter,
};

use crate::error::Result;
use crate::model::EmbeddingVector;

pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
}
