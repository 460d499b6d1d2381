//! Workspace persistence and ingestion.
//!
//! A workspace is a directory of line-delimited JSON files:
//!
//! ```text
//! meta.json                      schema version, project, adapter config
//! issues.jsonl                   Issue records, sorted by iid
//! reviews.jsonl                  Review records, sorted by id
//! links.jsonl                    gold links and triage decisions, append order
//! embeddings/<provider>.jsonl    vectors per provider, sorted by (kind, id)
//! cache/translations.jsonl       translation cache
//! ```
//!
//! Writes require a [`WriteLock`], backed by a `.lock` file, so there is at
//! most one writer per workspace. Readers never lock.

mod collector;
mod embeddings;
mod import;
mod triage;

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use collector::{
    collect_issues, CollectReport, CollectorConfig, FixtureTransport, HttpResponse, HttpTransport,
    IssueCollector, UreqTransport,
};
pub use embeddings::{upsert_embeddings, EmbedReport, EmbeddingRecord, RecordKind};
pub use import::{import_reviews, ImportFormat, ImportReport};
pub use triage::{record_triage, Decision, TriageDecision};

use crate::config::WorkspaceConfig;
use crate::error::{Error, Result};
use crate::model::{Issue, Review};

pub const SCHEMA_VERSION: u32 = 1;

const META_FILE: &str = "meta.json";
const ISSUES_FILE: &str = "issues.jsonl";
const REVIEWS_FILE: &str = "reviews.jsonl";
const LINKS_FILE: &str = "links.jsonl";
const EMBEDDINGS_DIR: &str = "embeddings";
const LOCK_FILE: &str = ".lock";
const COLLECT_STATE_FILE: &str = "collect_state.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceMeta {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<String>,
    #[serde(default, flatten)]
    pub config: WorkspaceConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkOrigin {
    Imported,
    Triage,
}

/// A human-asserted review→issue relation; at most one per review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldLink {
    pub review_id: String,
    pub issue_iid: u64,
    pub origin: LinkOrigin,
    pub decided_at: DateTime<Utc>,
}

/// One line of `links.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LinkRecord {
    GoldLink(GoldLink),
    Triage(TriageDecision),
}

/// Proof of holding the workspace write lock. Released on drop.
#[derive(Debug)]
pub struct WriteLock {
    path: PathBuf,
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Handle to a workspace directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
    meta: WorkspaceMeta,
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            line: n + 1,
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

/// Replaces `path` atomically with one JSON document per line.
pub(crate) fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// File-name-safe form of a provider id (`pooled:a:b` → `pooled_a_b`).
pub fn provider_file_stem(provider_id: &str) -> String {
    provider_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '+' { c } else { '_' })
        .collect()
}

impl Workspace {
    /// Creates a workspace at `root`, or opens it if it already exists.
    pub fn init(root: impl AsRef<Path>, project: Option<String>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if root.join(META_FILE).exists() {
            return Workspace::open(root);
        }
        fs::create_dir_all(&root)?;
        let meta = WorkspaceMeta {
            schema_version: SCHEMA_VERSION,
            project,
            config: WorkspaceConfig::default(),
        };
        write_atomic(&root.join(META_FILE), serde_json::to_string_pretty(&meta)?.as_bytes())?;
        Ok(Workspace { root, meta })
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let meta_path = root.join(META_FILE);
        if !meta_path.exists() {
            return Err(Error::NotAWorkspace(root));
        }
        let meta: WorkspaceMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
        if meta.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: meta.schema_version,
                supported: SCHEMA_VERSION,
            });
        }
        Ok(Workspace { root, meta })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn meta(&self) -> &WorkspaceMeta {
        &self.meta
    }

    pub fn config(&self) -> &WorkspaceConfig {
        &self.meta.config
    }

    /// Resolves a path from the config relative to the workspace root.
    pub fn resolve(&self, path: impl AsRef<Path>) -> PathBuf {
        let p = path.as_ref();
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn save_meta(&mut self, _lock: &WriteLock, meta: WorkspaceMeta) -> Result<()> {
        write_atomic(
            &self.root.join(META_FILE),
            serde_json::to_string_pretty(&meta)?.as_bytes(),
        )?;
        self.meta = meta;
        Ok(())
    }

    pub fn lock(&self) -> Result<WriteLock> {
        let path = self.root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WriteLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::WorkspaceLocked(path)),
            Err(e) => Err(e.into()),
        }
    }

    pub fn issues(&self) -> Result<Vec<Issue>> {
        read_jsonl(&self.root.join(ISSUES_FILE))
    }

    pub fn issue_map(&self) -> Result<BTreeMap<u64, Issue>> {
        Ok(self.issues()?.into_iter().map(|i| (i.iid, i)).collect())
    }

    /// Inserts or replaces issues by iid; returns the stored total.
    pub fn upsert_issues(&self, _lock: &WriteLock, issues: impl IntoIterator<Item = Issue>) -> Result<usize> {
        let mut map = self.issue_map()?;
        for issue in issues {
            issue.validate()?;
            map.insert(issue.iid, issue);
        }
        let all: Vec<Issue> = map.into_values().collect();
        write_jsonl(&self.root.join(ISSUES_FILE), &all)?;
        Ok(all.len())
    }

    pub fn reviews(&self) -> Result<Vec<Review>> {
        read_jsonl(&self.root.join(REVIEWS_FILE))
    }

    pub fn review_map(&self) -> Result<BTreeMap<String, Review>> {
        Ok(self.reviews()?.into_iter().map(|r| (r.id.clone(), r)).collect())
    }

    pub fn review(&self, id: &str) -> Result<Review> {
        self.reviews()?
            .into_iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::UnknownReview(id.to_string()))
    }

    /// Replaces the stored reviews with `reviews` (sorted by id on write).
    pub fn save_reviews(&self, _lock: &WriteLock, reviews: impl IntoIterator<Item = Review>) -> Result<usize> {
        let mut map = BTreeMap::new();
        for r in reviews {
            r.validate()?;
            if map.insert(r.id.clone(), r).is_some() {
                return Err(Error::InvalidArgument("duplicate review id on save".into()));
            }
        }
        let all: Vec<Review> = map.into_values().collect();
        write_jsonl(&self.root.join(REVIEWS_FILE), &all)?;
        Ok(all.len())
    }

    pub fn links(&self) -> Result<Vec<LinkRecord>> {
        read_jsonl(&self.root.join(LINKS_FILE))
    }

    /// Gold links sorted by review id.
    pub fn gold_links(&self) -> Result<Vec<GoldLink>> {
        let mut gold: Vec<GoldLink> = self
            .links()?
            .into_iter()
            .filter_map(|l| match l {
                LinkRecord::GoldLink(g) => Some(g),
                LinkRecord::Triage(_) => None,
            })
            .collect();
        gold.sort_by(|a, b| a.review_id.cmp(&b.review_id));
        Ok(gold)
    }

    pub(crate) fn append_links(&self, _lock: &WriteLock, records: &[LinkRecord]) -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join(LINKS_FILE))?;
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn embeddings_path(&self, provider_id: &str) -> PathBuf {
        self.root
            .join(EMBEDDINGS_DIR)
            .join(format!("{}.jsonl", provider_file_stem(provider_id)))
    }

    pub fn embeddings(&self, provider_id: &str) -> Result<Vec<EmbeddingRecord>> {
        let records: Vec<EmbeddingRecord> = read_jsonl(&self.embeddings_path(provider_id))?;
        Ok(records
            .into_iter()
            .filter(|r| r.provider_id == provider_id)
            .collect())
    }

    pub(crate) fn save_embeddings(
        &self,
        _lock: &WriteLock,
        provider_id: &str,
        records: &mut [EmbeddingRecord],
    ) -> Result<()> {
        records.sort_by_key(EmbeddingRecord::sort_key);
        write_jsonl(&self.embeddings_path(provider_id), records)
    }

    /// Stored vector counts per provider id.
    pub fn embedding_counts(&self) -> Result<BTreeMap<String, usize>> {
        let dir = self.root.join(EMBEDDINGS_DIR);
        let mut out = BTreeMap::new();
        if !dir.exists() {
            return Ok(out);
        }
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            for r in read_jsonl::<EmbeddingRecord>(&path)? {
                *out.entry(r.provider_id).or_insert(0) += 1;
            }
        }
        Ok(out)
    }

    pub fn translation_cache_path(&self) -> PathBuf {
        self.root.join("cache").join("translations.jsonl")
    }

    pub(crate) fn collect_state_path(&self) -> PathBuf {
        self.root.join(COLLECT_STATE_FILE)
    }

    pub fn last_report_path(&self) -> PathBuf {
        self.root.join("reports").join("last_eval.json")
    }
}
