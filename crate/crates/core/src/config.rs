//! Adapter configuration stored in a workspace's `meta.json`, and the
//! builders that turn it into a provider registry and an enricher.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "providers": [
//!     {"kind": "http", "id": "minilm", "url": "http://localhost:8000", "model": "all-MiniLM-L6-v2", "dim": 384},
//!     {"kind": "recorded", "id": "minilm-rec", "dim": 384, "path": "fixtures/minilm.jsonl"}
//!   ],
//!   "translator": {"kind": "http", "id": "libre", "url": "http://localhost:5000"},
//!   "classifier": {"kind": "rules"},
//!   "default_provider": "minilm",
//!   "stopwords": "stopwords.txt"
//! }
//! ```
//!
//! Relative paths resolve against the workspace root.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Workspace;
use crate::embed::{
    HashEmbedder, HttpSentenceAdapter, ProviderRegistry, RecordedSentenceAdapter, SentenceEmbedder,
};
use crate::enrich::{
    Enricher, HttpClassifier, HttpTranslator, OfflineTranslator, RecordedTranslator,
    ReviewClassifier, RuleClassifier, TranslationAdapter, TranslationCache, Translator,
    DEFAULT_MAX_IN_FLIGHT,
};
use crate::error::Result;
use crate::text::{StopwordFilter, Stopwords};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    /// Additional feature-hashing provider with a non-default dimension.
    Hash { dim: usize },
    /// Remote `POST /embed` endpoint.
    Http { id: String, url: String, model: String, dim: usize },
    /// Recorded `(text, vector)` fixture.
    Recorded { id: String, dim: usize, path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranslatorConfig {
    Http { id: String, url: String },
    Recorded { id: String, path: PathBuf },
    Offline { id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    Rules,
    Http { url: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceConfig {
    /// Provider used when none is named on the command line or in a request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_provider: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub providers: Vec<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translator: Option<TranslatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<ClassifierConfig>,
    /// Replacement stopword list (same format as the bundled one).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
}

fn stopword_filter(ws: &Workspace) -> Result<StopwordFilter> {
    match &ws.config().stopwords {
        None => Ok(StopwordFilter::default()),
        Some(path) => {
            let path = ws.resolve(path);
            let id = format!(
                "stopwords-{}",
                path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom")
            );
            Ok(StopwordFilter::with_id(id, Stopwords::from_path(path)?))
        }
    }
}

/// The workspace's default provider, else `ref-384`.
pub fn default_provider(ws: &Workspace) -> String {
    ws.config()
        .default_provider
        .clone()
        .unwrap_or_else(|| format!("ref-{}", crate::embed::DEFAULT_DIM))
}

/// Built-in providers plus everything listed in the workspace config.
pub fn build_registry(ws: &Workspace) -> Result<ProviderRegistry> {
    let filter = stopword_filter(ws)?;
    let mut registry = ProviderRegistry::with_builtins_using(filter.clone());
    for p in &ws.config().providers {
        match p {
            ProviderConfig::Hash { dim } => {
                registry.register(Arc::new(HashEmbedder::with_filter(*dim, filter.clone())?))?
            }
            ProviderConfig::Http { id, url, model, dim } => registry.register(Arc::new(
                SentenceEmbedder::new(Arc::new(HttpSentenceAdapter::new(id.clone(), url, model.clone(), *dim))),
            ))?,
            ProviderConfig::Recorded { id, dim, path } => {
                let adapter = RecordedSentenceAdapter::from_jsonl(id.clone(), *dim, ws.resolve(path))?;
                registry.register(Arc::new(SentenceEmbedder::new(Arc::new(adapter))))?
            }
        }
    }
    Ok(registry)
}

/// Translator (with the workspace's persistent cache) and classifier.
pub fn build_enricher(ws: &Workspace) -> Result<Enricher> {
    let translator = match &ws.config().translator {
        None => None,
        Some(cfg) => {
            let adapter: Arc<dyn TranslationAdapter> = match cfg {
                TranslatorConfig::Http { id, url } => Arc::new(HttpTranslator::new(id.clone(), url)),
                TranslatorConfig::Recorded { id, path } => {
                    Arc::new(RecordedTranslator::from_jsonl(id.clone(), ws.resolve(path))?)
                }
                TranslatorConfig::Offline { id } => Arc::new(OfflineTranslator::new(id.clone())),
            };
            let cache = TranslationCache::open(ws.translation_cache_path())?;
            let limit = ws.config().max_in_flight.unwrap_or(DEFAULT_MAX_IN_FLIGHT);
            Some(Arc::new(Translator::with_max_in_flight(adapter, cache, limit)))
        }
    };
    let classifier: Arc<dyn ReviewClassifier> = match &ws.config().classifier {
        None | Some(ClassifierConfig::Rules) => Arc::new(RuleClassifier::default()),
        Some(ClassifierConfig::Http { url }) => Arc::new(HttpClassifier::new(url)),
    };
    Ok(Enricher::new(translator, classifier))
}
