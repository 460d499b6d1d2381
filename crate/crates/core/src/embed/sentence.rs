use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::http::{self, HttpFailure};
use crate::model::EmbeddingVector;

/// A model that computes one vector for a whole text.
pub trait SentenceModelAdapter: Send + Sync {
    fn adapter_id(&self) -> &str;

    /// Declared output length; every returned vector is checked against it.
    fn dim(&self) -> usize;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

/// Embeds `text` with `adapter` and validates the declared dimension.
pub fn sentence_embed(adapter: &dyn SentenceModelAdapter, text: &str) -> Result<EmbeddingVector> {
    if text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let mut out = adapter.embed_batch(&[text])?;
    if out.len() != 1 {
        return Err(Error::BackendUnavailable(format!(
            "adapter `{}` returned {} vectors for one text",
            adapter.adapter_id(),
            out.len()
        )));
    }
    let values = out.pop().unwrap_or_default();
    if values.len() != adapter.dim() {
        return Err(Error::DimensionMismatch {
            expected: adapter.dim(),
            actual: values.len(),
        });
    }
    EmbeddingVector::new(adapter.adapter_id(), values)
}

#[derive(Clone)]
pub struct SentenceEmbedder {
    adapter: Arc<dyn SentenceModelAdapter>,
}

impl SentenceEmbedder {
    pub fn new(adapter: Arc<dyn SentenceModelAdapter>) -> Self {
        SentenceEmbedder { adapter }
    }
}

impl EmbeddingProvider for SentenceEmbedder {
    fn provider_id(&self) -> &str {
        self.adapter.adapter_id()
    }

    fn dim(&self) -> usize {
        self.adapter.dim()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        sentence_embed(self.adapter.as_ref(), text)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
    model: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

/// Client for a remote `POST /embed` endpoint.
///
/// `ureq::Agent` pools connections internally and is safe to share across
/// threads.
pub struct HttpSentenceAdapter {
    id: String,
    url: String,
    model: String,
    dim: usize,
    agent: ureq::Agent,
}

impl HttpSentenceAdapter {
    pub fn new(
        id: impl Into<String>,
        base_url: &str,
        model: impl Into<String>,
        dim: usize,
    ) -> Self {
        HttpSentenceAdapter {
            id: id.into(),
            url: http::join_url(base_url, "embed"),
            model: model.into(),
            dim,
            agent: http::agent(Duration::from_secs(60)),
        }
    }
}

impl SentenceModelAdapter for HttpSentenceAdapter {
    fn adapter_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let req = EmbedRequest {
            texts,
            model: &self.model,
        };
        let resp: EmbedResponse = http::post_json(&self.agent, &self.url, &req)
            .map_err(|e: HttpFailure| Error::BackendUnavailable(format!("{}: {e}", self.url)))?;
        if resp.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: resp.dim,
            });
        }
        if resp.vectors.len() != texts.len() {
            return Err(Error::BackendUnavailable(format!(
                "endpoint returned {} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        Ok(resp.vectors)
    }
}

/// One recorded `(text, vector)` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordedVector {
    pub text: String,
    pub vector: Vec<f64>,
}

/// Replays vectors recorded from a real model; unknown texts fail with
/// [`Error::BackendUnavailable`].
#[derive(Debug, Clone)]
pub struct RecordedSentenceAdapter {
    id: String,
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl RecordedSentenceAdapter {
    pub fn new(
        id: impl Into<String>,
        dim: usize,
        records: impl IntoIterator<Item = RecordedVector>,
    ) -> Result<Self> {
        let mut table = HashMap::new();
        for r in records {
            if r.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.vector.len(),
                });
            }
            table.insert(r.text, r.vector);
        }
        Ok(RecordedSentenceAdapter {
            id: id.into(),
            dim,
            table,
        })
    }

    /// Loads a JSONL file of [`RecordedVector`] lines.
    pub fn from_jsonl(id: impl Into<String>, dim: usize, path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?);
        }
        RecordedSentenceAdapter::new(id, dim, records)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl SentenceModelAdapter for RecordedSentenceAdapter {
    fn adapter_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts
            .iter()
            .map(|t| {
                self.table.get(*t).cloned().ok_or_else(|| {
                    Error::BackendUnavailable(format!("no recorded vector for {t:?}"))
                })
            })
            .collect()
    }
}
