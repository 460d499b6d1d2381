use std::sync::Arc;

use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::model::{mean_pool, EmbeddingVector};
use crate::text::{align_tokens, normalize, TokenFilter, TokenSpan};

/// A model that produces one contextual vector per token of its own
/// tokenization.
///
/// The text passed in is already normalized (see [`crate::text::normalize`]);
/// returned spans are char offsets into it, so they can be aligned with the
/// filter's tokens.
pub trait TokenEmbeddingBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    fn dim(&self) -> usize;

    fn contextual_token_embeddings(
        &self,
        normalized: &str,
    ) -> Result<(Vec<TokenSpan>, Vec<EmbeddingVector>)>;
}

fn pooled_id(backend: &dyn TokenEmbeddingBackend, filter: &dyn TokenFilter) -> String {
    format!("pooled:{}:{}", backend.backend_id(), filter.filter_id())
}

/// Mean of the backend token vectors that overlap a token kept by `filter`.
///
/// Falls back to the mean of every backend vector when the filter keeps
/// nothing, so short texts such as "ok" still embed.
pub fn pooled_contextual_embed(
    backend: &dyn TokenEmbeddingBackend,
    filter: &dyn TokenFilter,
    text: &str,
) -> Result<EmbeddingVector> {
    if text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let normalized = normalize(text);
    let (spans, vectors) = backend.contextual_token_embeddings(&normalized)?;
    if spans.len() != vectors.len() {
        return Err(Error::BackendUnavailable(format!(
            "backend `{}` returned {} spans for {} vectors",
            backend.backend_id(),
            spans.len(),
            vectors.len()
        )));
    }
    if vectors.is_empty() {
        return Err(Error::EmptyText);
    }
    if let Some(bad) = vectors.iter().find(|v| v.dim() != backend.dim()) {
        return Err(Error::DimensionMismatch {
            expected: backend.dim(),
            actual: bad.dim(),
        });
    }

    let kept_filter_spans = filter.kept_spans(&normalized);
    let alignment = align_tokens(&kept_filter_spans, &spans);
    let all: Vec<usize> = (0..kept_filter_spans.len()).collect();
    let kept = alignment.project(&all);

    let pooled = if kept.is_empty() {
        mean_pool(&vectors)?
    } else {
        let selected: Vec<EmbeddingVector> = kept.iter().map(|&j| vectors[j].clone()).collect();
        mean_pool(&selected)?
    };
    Ok(pooled.retag(pooled_id(backend, filter)))
}

/// Provider wrapper around [`pooled_contextual_embed`].
#[derive(Clone)]
pub struct PooledEmbedder {
    id: String,
    backend: Arc<dyn TokenEmbeddingBackend>,
    filter: Arc<dyn TokenFilter>,
}

impl PooledEmbedder {
    pub fn new(backend: Arc<dyn TokenEmbeddingBackend>, filter: Arc<dyn TokenFilter>) -> Self {
        PooledEmbedder {
            id: pooled_id(backend.as_ref(), filter.as_ref()),
            backend,
            filter,
        }
    }
}

impl EmbeddingProvider for PooledEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.backend.dim()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        pooled_contextual_embed(self.backend.as_ref(), self.filter.as_ref(), text)
    }
}
