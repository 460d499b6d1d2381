use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Workspace, WriteLock};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::hash::content_hash;
use crate::model::EmbeddingVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Issue,
    Review,
}

/// One stored vector. `id` is the issue iid (as a string) or the review id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub kind: RecordKind,
    pub id: String,
    /// Hash of the embedded text; a changed text invalidates the vector.
    pub text_hash: String,
    pub provider_id: String,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl EmbeddingRecord {
    /// Issues sort numerically by iid, reviews lexically by id.
    pub(crate) fn sort_key(&self) -> (RecordKind, u64, String) {
        match self.kind {
            RecordKind::Issue => (self.kind, self.id.parse().unwrap_or(u64::MAX), self.id.clone()),
            RecordKind::Review => (self.kind, 0, self.id.clone()),
        }
    }

    pub fn vector(&self) -> Result<EmbeddingVector> {
        if self.values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: self.values.len(),
            });
        }
        EmbeddingVector::new(self.provider_id.clone(), self.values.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbedReport {
    pub provider_id: String,
    pub embedded: usize,
    pub up_to_date: usize,
    /// `(record id, error message)` for records that could not be embedded.
    pub failures: Vec<(String, String)>,
}

/// Embeds every issue title (or review text) that has no current vector for
/// `provider`. A failing record is reported and skipped; the rest continue.
pub fn upsert_embeddings(
    ws: &Workspace,
    lock: &WriteLock,
    provider: &dyn EmbeddingProvider,
    kind: RecordKind,
) -> Result<EmbedReport> {
    let provider_id = provider.provider_id().to_string();
    let texts: Vec<(String, String)> = match kind {
        RecordKind::Issue => ws
            .issues()?
            .into_iter()
            .map(|i| (i.iid.to_string(), i.embed_text().to_string()))
            .collect(),
        RecordKind::Review => ws
            .reviews()?
            .into_iter()
            .map(|r| (r.id.clone(), r.embed_text().to_string()))
            .collect(),
    };

    let mut stored = ws.embeddings(&provider_id)?;
    let mut index: HashMap<(RecordKind, String), usize> = stored
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.kind, r.id.clone()), i))
        .collect();

    let mut report = EmbedReport {
        provider_id: provider_id.clone(),
        ..EmbedReport::default()
    };
    for (id, text) in texts {
        let text_hash = content_hash(&text);
        let slot = index.get(&(kind, id.clone())).copied();
        if let Some(i) = slot {
            if stored[i].text_hash == text_hash && stored[i].dim == provider.dim() {
                report.up_to_date += 1;
                continue;
            }
        }
        let vector = match provider.embed(&text) {
            Ok(v) if v.dim() != provider.dim() => {
                report.failures.push((
                    id,
                    Error::DimensionMismatch {
                        expected: provider.dim(),
                        actual: v.dim(),
                    }
                    .to_string(),
                ));
                continue;
            }
            Ok(v) => v,
            Err(e) => {
                log::warn!("embedding {kind:?} {id} with {provider_id} failed: {e}");
                report.failures.push((id, e.to_string()));
                continue;
            }
        };
        let record = EmbeddingRecord {
            kind,
            id: id.clone(),
            text_hash,
            provider_id: provider_id.clone(),
            dim: vector.dim(),
            values: vector.into_values(),
        };
        match slot {
            Some(i) => stored[i] = record,
            None => {
                index.insert((kind, id), stored.len());
                stored.push(record);
            }
        }
        report.embedded += 1;
    }
    if report.embedded > 0 || !ws.embeddings_path(&provider_id).exists() {
        ws.save_embeddings(lock, &provider_id, &mut stored)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::model::{Issue, Review};

    #[test]
    fn embeds_once_and_isolates_failures() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::init(dir.path(), None).unwrap();
        let lock = ws.lock().unwrap();
        ws.upsert_issues(&lock, (1..=5).map(|i| Issue::new(i, format!("issue title {i}")).unwrap()))
            .unwrap();
        ws.save_reviews(
            &lock,
            vec![
                Review::new("a", "sound drops", "en").unwrap(),
                Review::new("b", "?!", "en").unwrap(),
            ],
        )
        .unwrap();
        let provider = HashEmbedder::new(16).unwrap();

        let r = upsert_embeddings(&ws, &lock, &provider, RecordKind::Issue).unwrap();
        assert_eq!((r.embedded, r.up_to_date), (5, 0));
        let r = upsert_embeddings(&ws, &lock, &provider, RecordKind::Issue).unwrap();
        assert_eq!((r.embedded, r.up_to_date), (0, 5));

        let r = upsert_embeddings(&ws, &lock, &provider, RecordKind::Review).unwrap();
        assert_eq!(r.embedded, 1);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].0, "b");

        let stored = ws.embeddings("ref-16").unwrap();
        assert_eq!(stored.len(), 6);
        assert!(stored.iter().all(|s| s.dim == 16 && s.values.len() == 16));
    }

    #[test]
    fn changed_title_is_re_embedded() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::init(dir.path(), None).unwrap();
        let lock = ws.lock().unwrap();
        ws.upsert_issues(&lock, vec![Issue::new(1, "old title").unwrap()]).unwrap();
        let provider = HashEmbedder::new(16).unwrap();
        upsert_embeddings(&ws, &lock, &provider, RecordKind::Issue).unwrap();
        ws.upsert_issues(&lock, vec![Issue::new(1, "new title").unwrap()]).unwrap();
        let r = upsert_embeddings(&ws, &lock, &provider, RecordKind::Issue).unwrap();
        assert_eq!(r.embedded, 1);
        assert_eq!(ws.embeddings("ref-16").unwrap().len(), 1);
    }

    #[test]
    fn issues_sort_numerically() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::init(dir.path(), None).unwrap();
        let lock = ws.lock().unwrap();
        ws.upsert_issues(&lock, [10, 9, 100].map(|i| Issue::new(i, format!("t {i}")).unwrap()))
            .unwrap();
        upsert_embeddings(&ws, &lock, &HashEmbedder::new(8).unwrap(), RecordKind::Issue).unwrap();
        let ids: Vec<_> = ws.embeddings("ref-8").unwrap().into_iter().map(|r| r.id).collect();
        assert_eq!(ids, vec!["9", "10", "100"]);
    }
}
