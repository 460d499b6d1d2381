use crate::embed::{EmbeddingProvider, TokenEmbeddingBackend};
use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::model::{normalize_values, EmbeddingVector};
use crate::text::{
    basic_tokenize, tokenize_normalized, StopwordFilter, TokenFilter, TokenSpan,
    STOPWORD_FILTER_ID,
};

/// Output size shared by the reference providers and the sentence adapters.
pub const DEFAULT_DIM: usize = 384;

fn bucket_and_sign(feature: &str, dim: usize) -> (usize, f64) {
    let h = fnv1a64(feature.as_bytes());
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    ((h % dim as u64) as usize, sign)
}

fn hash_tokens<'a>(tokens: impl Iterator<Item = &'a str>, dim: usize) -> Vec<f64> {
    let mut values = vec![0.0; dim];
    for token in tokens {
        let (bucket, sign) = bucket_and_sign(token, dim);
        values[bucket] += sign;
    }
    values
}

/// Signed feature hashing over the content tokens of `text`, L2-normalized.
///
/// Stopwords are dropped before hashing; when nothing survives the filter all
/// tokens are hashed instead.
pub fn reference_hash_embed(text: &str, dim: usize) -> Result<EmbeddingVector> {
    HashEmbedder::new(dim)?.embed(text)
}

/// The deterministic reference provider (`ref-<dim>`).
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    id: String,
    dim: usize,
    filter: StopwordFilter,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        HashEmbedder::with_filter(dim, StopwordFilter::default())
    }

    /// Uses a custom stopword filter. Non-default filters are folded into the
    /// provider id so vectors from different lists never mix.
    pub fn with_filter(dim: usize, filter: StopwordFilter) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "hash embedding dimension must be at least 2, got {dim}"
            )));
        }
        let id = if filter.filter_id() == STOPWORD_FILTER_ID {
            format!("ref-{dim}")
        } else {
            format!("ref-{dim}+{}", filter.filter_id())
        };
        Ok(HashEmbedder { id, dim, filter })
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let tokens = basic_tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyText);
        }
        let kept = crate::text::content_filter_with(&tokens, self.filter.stopwords());
        let values = if kept.is_empty() {
            hash_tokens(tokens.iter().map(|t| t.text.as_str()), self.dim)
        } else {
            hash_tokens(kept.iter().map(|&i| tokens[i].text.as_str()), self.dim)
        };
        // Opposite-signed collisions can cancel every bucket.
        let values = normalize_values(&values).map_err(|_| Error::EmptyText)?;
        EmbeddingVector::new(self.id.clone(), values)
    }
}

/// A model-free token backend with word-piece style tokens whose vectors
/// depend on their neighbours.
///
/// Words are cut into pieces of at most four characters. Each piece hashes
/// itself at weight 1, its left neighbour at 0.5 and its right neighbour at
/// 0.25; the distinct weights keep every piece vector non-zero.
#[derive(Debug, Clone)]
pub struct ContextHashBackend {
    id: String,
    dim: usize,
}

const PIECE_CHARS: usize = 4;

impl ContextHashBackend {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "backend dimension must be at least 2, got {dim}"
            )));
        }
        Ok(ContextHashBackend {
            id: format!("hashctx-{dim}"),
            dim,
        })
    }

    fn pieces(normalized: &str) -> Vec<(TokenSpan, String)> {
        let mut out = Vec::new();
        for word in tokenize_normalized(normalized) {
            let chars: Vec<char> = word.text.chars().collect();
            for (n, chunk) in chars.chunks(PIECE_CHARS).enumerate() {
                let start = word.start + n * PIECE_CHARS;
                let text: String = chunk.iter().collect();
                let feature = if n == 0 { text.clone() } else { format!("##{text}") };
                out.push((TokenSpan::new(text, start, start + chunk.len()), feature));
            }
        }
        out
    }
}

impl TokenEmbeddingBackend for ContextHashBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn contextual_token_embeddings(
        &self,
        normalized: &str,
    ) -> Result<(Vec<TokenSpan>, Vec<EmbeddingVector>)> {
        let pieces = Self::pieces(normalized);
        let mut spans = Vec::with_capacity(pieces.len());
        let mut vectors = Vec::with_capacity(pieces.len());
        for (i, (span, feature)) in pieces.iter().enumerate() {
            let prev = if i == 0 { "^" } else { pieces[i - 1].1.as_str() };
            let next = pieces.get(i + 1).map_or("$", |p| p.1.as_str());
            let mut values = vec![0.0; self.dim];
            for (f, weight) in [
                (feature.clone(), 1.0),
                (format!("<{prev}"), 0.5),
                (format!(">{next}"), 0.25),
            ] {
                let (bucket, sign) = bucket_and_sign(&f, self.dim);
                values[bucket] += sign * weight;
            }
            spans.push(span.clone());
            vectors.push(EmbeddingVector::new(self.id.clone(), values)?);
        }
        Ok((spans, vectors))
    }
}
