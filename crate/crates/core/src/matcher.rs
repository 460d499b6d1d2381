//! Exact top-k cosine retrieval of issues for a query review.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::{build_enricher, build_registry};
use crate::corpus::{RecordKind, Workspace};
use crate::embed::ProviderRegistry;
use crate::enrich::{EnrichOptions, Enricher};
use crate::error::{Error, Result};
use crate::hash::content_hash;
use crate::model::{dot, normalize_values, EmbeddingVector, MatchCandidate, Review, ReviewClass};

/// Default number of candidates per query.
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub issue_iid: u64,
    /// Unit-norm copy of the issue vector.
    pub unit: Vec<f64>,
}

/// Immutable, unit-normalized issue vectors for one provider, sorted by iid.
#[derive(Debug, Clone)]
pub struct MatchIndex {
    provider_id: String,
    dim: usize,
    entries: Vec<IndexEntry>,
    built_at: DateTime<Utc>,
    source_digest: String,
}

fn digest<'a>(parts: impl Iterator<Item = (u64, &'a str)>) -> String {
    let mut buf = String::new();
    for (iid, text_hash) in parts {
        buf.push_str(&format!("{iid}:{text_hash}\n"));
    }
    content_hash(&buf)
}

impl MatchIndex {
    /// Builds an index from in-memory vectors. All vectors must share the
    /// provider id and dimension; iids must be unique.
    pub fn from_vectors(
        provider_id: impl Into<String>,
        vectors: impl IntoIterator<Item = (u64, EmbeddingVector)>,
    ) -> Result<Self> {
        let provider_id = provider_id.into();
        let mut entries = Vec::new();
        let mut dim = None;
        for (iid, v) in vectors {
            if v.provider_id() != provider_id {
                return Err(Error::ProviderMismatch {
                    expected: provider_id,
                    actual: v.provider_id().to_string(),
                });
            }
            let expected = *dim.get_or_insert(v.dim());
            if v.dim() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: v.dim(),
                });
            }
            entries.push(IndexEntry {
                issue_iid: iid,
                unit: normalize_values(v.values())?,
            });
        }
        let dim = dim.ok_or_else(|| Error::NoEmbeddings(provider_id.clone()))?;
        entries.sort_by_key(|e| e.issue_iid);
        if let Some(w) = entries.windows(2).find(|w| w[0].issue_iid == w[1].issue_iid) {
            return Err(Error::DuplicateId(w[0].issue_iid.to_string()));
        }
        let source_digest = digest(entries.iter().map(|e| (e.issue_iid, "")));
        Ok(MatchIndex {
            provider_id,
            dim,
            entries,
            built_at: Utc::now(),
            source_digest,
        })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn built_at(&self) -> DateTime<Utc> {
        self.built_at
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    /// True when the stored issue embeddings changed since the build.
    pub fn is_stale(&self, ws: &Workspace) -> Result<bool> {
        Ok(stored_digest(ws, &self.provider_id)? != self.source_digest)
    }
}

fn stored_digest(ws: &Workspace, provider_id: &str) -> Result<String> {
    let mut records: Vec<_> = ws
        .embeddings(provider_id)?
        .into_iter()
        .filter(|r| r.kind == RecordKind::Issue)
        .collect();
    records.sort_by_key(crate::corpus::EmbeddingRecord::sort_key);
    Ok(digest(records.iter().map(|r| (r.id.parse().unwrap_or(0), r.text_hash.as_str()))))
}

/// Loads the stored issue vectors of `provider_id` into a [`MatchIndex`].
pub fn build_index(ws: &Workspace, provider_id: &str) -> Result<MatchIndex> {
    let records: Vec<_> = ws
        .embeddings(provider_id)?
        .into_iter()
        .filter(|r| r.kind == RecordKind::Issue)
        .collect();
    if records.is_empty() {
        return Err(Error::NoEmbeddings(provider_id.to_string()));
    }
    let mut vectors = Vec::with_capacity(records.len());
    for r in &records {
        let iid = r.id.parse::<u64>().map_err(|_| Error::Parse {
            line: 0,
            message: format!("issue embedding with non-numeric id `{}`", r.id),
        })?;
        vectors.push((iid, r.vector()?));
    }
    let mut index = MatchIndex::from_vectors(provider_id, vectors)?;
    index.source_digest = stored_digest(ws, provider_id)?;
    Ok(index)
}

/// Ranked candidates for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_text: Option<String>,
    pub provider_id: String,
    pub candidates: Vec<MatchCandidate>,
    pub threshold_applied: Option<f64>,
    pub k_requested: usize,
    /// The review's class was not in the requested class filter.
    #[serde(default)]
    pub filtered_out: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translated_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ReviewClass>,
}

impl MatchResult {
    fn empty(provider_id: &str, k: usize, threshold: Option<f64>) -> Self {
        MatchResult {
            review_id: None,
            query_text: None,
            provider_id: provider_id.to_string(),
            candidates: Vec::new(),
            threshold_applied: threshold,
            k_requested: k,
            filtered_out: false,
            translated_text: None,
            label: None,
        }
    }

    /// 1-based rank of `iid` among the candidates.
    pub fn rank_of(&self, iid: u64) -> Option<&MatchCandidate> {
        self.candidates.iter().find(|c| c.issue_iid == iid)
    }
}

pub(crate) fn check_knobs(k: usize, threshold: Option<f64>) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if let Some(t) = threshold {
        if !(-1.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("threshold {t} outside [-1, 1]")));
        }
    }
    Ok(())
}

/// Exact scan: cosine against every issue, keep those at or above
/// `threshold`, best `k` by similarity with ties broken by ascending iid.
pub fn query_top_k(
    index: &MatchIndex,
    query: &EmbeddingVector,
    k: usize,
    threshold: Option<f64>,
) -> Result<MatchResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if query.provider_id() != index.provider_id {
        return Err(Error::ProviderMismatch {
            expected: index.provider_id.clone(),
            actual: query.provider_id().to_string(),
        });
    }
    if query.dim() != index.dim {
        return Err(Error::DimensionMismatch {
            expected: index.dim,
            actual: query.dim(),
        });
    }
    let unit_query = normalize_values(query.values())?;
    let mut scored: Vec<(u64, f64)> = index
        .entries
        .iter()
        .map(|e| (e.issue_iid, dot(&unit_query, &e.unit).clamp(-1.0, 1.0)))
        .filter(|&(_, s)| threshold.is_none_or(|t| s >= t))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(k);
    let mut result = MatchResult::empty(&index.provider_id, k, threshold);
    result.candidates = scored
        .into_iter()
        .enumerate()
        .map(|(i, (iid, sim))| MatchCandidate {
            issue_iid: iid,
            similarity: sim,
            rank: i + 1,
        })
        .collect();
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOptions {
    pub provider: String,
    pub k: usize,
    pub threshold: Option<f64>,
    pub translate_to: Option<String>,
    pub classify_filter: Option<BTreeSet<ReviewClass>>,
    /// Classify even without a filter, so the label is reported.
    pub classify: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            provider: format!("ref-{}", crate::embed::DEFAULT_DIM),
            k: DEFAULT_TOP_K,
            threshold: None,
            translate_to: None,
            classify_filter: None,
            classify: false,
        }
    }
}

/// Where a match failed: embedding the query, or anywhere else.
#[derive(Debug)]
pub(crate) enum Stage {
    Embed(Error),
    Other(Error),
}

impl Stage {
    pub(crate) fn into_inner(self) -> Error {
        match self {
            Stage::Embed(e) | Stage::Other(e) => e,
        }
    }
}

impl From<Error> for Stage {
    fn from(e: Error) -> Self {
        Stage::Other(e)
    }
}

type IndexSlot =Arc<Mutex<Option<Arc<MatchIndex>>>>;

/// Enrich, embed and query in one place, with one lazily built index per
/// provider.
///
/// Concurrent first queries for a provider wait on the same slot, so the
/// index is built exactly once; [`Matcher::invalidate`] swaps it out.
pub struct Matcher {
    ws: Workspace,
    registry: ProviderRegistry,
    enricher: Enricher,
    indexes: Mutex<HashMap<String, IndexSlot>>,
    builds: AtomicUsize,
}

impl Matcher {
    pub fn new(ws: Workspace, registry: ProviderRegistry, enricher: Enricher) -> Self {
        Matcher {
            ws,
            registry,
            enricher,
            indexes: Mutex::new(HashMap::new()),
            builds: AtomicUsize::new(0),
        }
    }

    /// Providers and enrichment adapters as configured in the workspace.
    pub fn from_workspace(ws: Workspace) -> Result<Self> {
        let registry = build_registry(&ws)?;
        let enricher = build_enricher(&ws)?;
        Ok(Matcher::new(ws, registry, enricher))
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }

    pub fn registry(&self) -> &ProviderRegistry {
        &self.registry
    }

    pub fn enricher(&self) -> &Enricher {
        &self.enricher
    }

    /// Number of index builds so far.
    pub fn build_count(&self) -> usize {
        self.builds.load(Ordering::SeqCst)
    }

    pub fn index(&self, provider_id: &str) -> Result<Arc<MatchIndex>> {
        self.registry.get(provider_id)?;
        let slot = self
            .indexes
            .lock()
            .expect("index map lock")
            .entry(provider_id.to_string())
            .or_default()
            .clone();
        let mut guard = slot.lock().expect("index slot lock");
        if let Some(index) = guard.as_ref() {
            return Ok(index.clone());
        }
        let index = Arc::new(build_index(&self.ws, provider_id)?);
        self.builds.fetch_add(1, Ordering::SeqCst);
        *guard = Some(index.clone());
        Ok(index)
    }

    /// Drops the cached index; the next query rebuilds it.
    pub fn invalidate(&self, provider_id: &str) {
        self.indexes.lock().expect("index map lock").remove(provider_id);
    }

    pub fn match_review(&self, review: &Review, opts: &MatchOptions) -> Result<MatchResult> {
        self.match_review_staged(review, opts).map_err(Stage::into_inner)
    }

    pub(crate) fn match_review_staged(
        &self,
        review: &Review,
        opts: &MatchOptions,
    ) -> std::result::Result<MatchResult, Stage> {
        check_knobs(opts.k, opts.threshold)?;
        let provider = self.registry.get(&opts.provider)?;
        let index = self.index(&opts.provider)?;
        let enriched = self.enricher.enrich(
            review,
            &EnrichOptions {
                target: opts.translate_to.clone(),
                classify: opts.classify || opts.classify_filter.is_some(),
            },
        )?;
        let filtered_out = match (&opts.classify_filter, enriched.label) {
            (Some(filter), Some(label)) => !filter.contains(&label),
            _ => false,
        };
        let mut result = if filtered_out {
            let mut r = MatchResult::empty(&opts.provider, opts.k, opts.threshold);
            r.filtered_out = true;
            r
        } else {
            let query = provider.embed(enriched.embed_text()).map_err(Stage::Embed)?;
            query_top_k(&index, &query, opts.k, opts.threshold)?
        };
        result.review_id = Some(review.id.clone());
        result.translated_text = opts.translate_to.as_ref().and(enriched.translated_text);
        result.label = enriched.label;
        Ok(result)
    }

    /// Matches free text that is not stored as a review.
    pub fn match_text(&self, text: &str, lang: &str, opts: &MatchOptions) -> Result<MatchResult> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let review = Review::new(format!("q-{}", content_hash(text)), text, lang)?;
        let mut result = self.match_review(&review, opts)?;
        result.review_id = None;
        result.query_text = Some(text.to_string());
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new("t", values.to_vec()).unwrap()
    }

    fn index() -> MatchIndex {
        MatchIndex::from_vectors(
            "t",
            vec![(1, v(&[1.0, 0.0])), (2, v(&[0.0, 1.0])), (3, v(&[0.6, 0.8]))],
        )
        .unwrap()
    }

    fn pairs(r: &MatchResult) -> Vec<(u64, f64)> {
        r.candidates.iter().map(|c| (c.issue_iid, c.similarity)).collect()
    }

    #[test]
    fn top_k_examples() {
        let r = query_top_k(&index(), &v(&[1.0, 0.0]), 2, None).unwrap();
        assert_eq!(pairs(&r), vec![(1, 1.0), (3, 0.6)]);
        assert_eq!(r.candidates[1].rank, 2);
        let r = query_top_k(&index(), &v(&[1.0, 0.0]), 2, Some(0.9)).unwrap();
        assert_eq!(pairs(&r), vec![(1, 1.0)]);
    }

    #[test]
    fn ties_prefer_lower_iid() {
        let idx = MatchIndex::from_vectors("t", vec![(9, v(&[1.0, 1.0])), (4, v(&[2.0, 2.0]))]).unwrap();
        let r = query_top_k(&idx, &v(&[3.0, 3.0]), 5, None).unwrap();
        assert_eq!(r.candidates.iter().map(|c| c.issue_iid).collect::<Vec<_>>(), vec![4, 9]);
    }

    #[test]
    fn k_larger_than_corpus() {
        let idx = MatchIndex::from_vectors("t", vec![(1, v(&[1.0, 0.0])), (2, v(&[0.0, 1.0]))]).unwrap();
        assert_eq!(query_top_k(&idx, &v(&[1.0, 1.0]), 3, None).unwrap().candidates.len(), 2);
    }

    #[test]
    fn stores_unit_vectors() {
        let idx = MatchIndex::from_vectors("t", vec![(1, v(&[3.0, 4.0]))]).unwrap();
        let unit = &idx.entries()[0].unit;
        assert!((unit[0] - 0.6).abs() < 1e-12 && (unit[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let idx = index();
        assert!(matches!(query_top_k(&idx, &v(&[1.0, 0.0, 0.0]), 1, None), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(query_top_k(&idx, &v(&[0.0, 0.0]), 1, None), Err(Error::ZeroVector)));
        assert!(matches!(query_top_k(&idx, &v(&[1.0, 0.0]), 0, None), Err(Error::InvalidArgument(_))));
        let other = EmbeddingVector::new("x", vec![1.0, 0.0]).unwrap();
        assert!(matches!(query_top_k(&idx, &other, 1, None), Err(Error::ProviderMismatch { .. })));
        assert!(matches!(
            MatchIndex::from_vectors("t", Vec::new()),
            Err(Error::NoEmbeddings(_))
        ));
        assert!(matches!(
            MatchIndex::from_vectors("t", vec![(1, v(&[1.0])), (1, v(&[2.0]))]),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn no_threshold_equals_minus_one() {
        let idx = index();
        let q = v(&[-1.0, -0.1]);
        assert_eq!(
            query_top_k(&idx, &q, 3, None).unwrap().candidates,
            query_top_k(&idx, &q, 3, Some(-1.0)).unwrap().candidates
        );
    }

    #[test]
    fn build_index_from_workspace() {
        use crate::corpus::upsert_embeddings;
        use crate::embed::HashEmbedder;
        use crate::model::Issue;

        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::init(dir.path(), None).unwrap();
        assert!(matches!(build_index(&ws, "ref-16"), Err(Error::NoEmbeddings(_))));
        let lock = ws.lock().unwrap();
        ws.upsert_issues(&lock, (1..=4).map(|i| Issue::new(i, format!("issue {i} text")).unwrap()))
            .unwrap();
        upsert_embeddings(&ws, &lock, &HashEmbedder::new(16).unwrap(), RecordKind::Issue).unwrap();
        let idx = build_index(&ws, "ref-16").unwrap();
        assert_eq!(idx.len(), 4);
        assert!(!idx.is_stale(&ws).unwrap());
        ws.upsert_issues(&lock, vec![Issue::new(2, "renamed").unwrap()]).unwrap();
        upsert_embeddings(&ws, &lock, &HashEmbedder::new(16).unwrap(), RecordKind::Issue).unwrap();
        assert!(idx.is_stale(&ws).unwrap());
    }
}
