use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::content_hash;
use crate::http::{self, HttpFailure};

/// Default bound on concurrent adapter calls.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Checks a BCP-47-style tag: a 2-3 letter primary subtag followed by
/// alphanumeric subtags of 1-8 chars (`en`, `pt-BR`, `zh-Hant-TW`).
pub fn validate_lang_tag(tag: &str) -> Result<()> {
    let mut parts = tag.split('-');
    let primary = parts.next().unwrap_or("");
    let primary_ok = (2..=3).contains(&primary.len()) && primary.chars().all(|c| c.is_ascii_alphabetic());
    let rest_ok = parts.all(|p| (1..=8).contains(&p.len()) && p.chars().all(|c| c.is_ascii_alphanumeric()));
    if primary_ok && rest_ok {
        Ok(())
    } else {
        Err(Error::UnsupportedLanguage(tag.to_string()))
    }
}

fn same_language(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b)
}

/// A machine-translation backend.
pub trait TranslationAdapter: Send + Sync {
    fn provider_id(&self) -> &str;

    /// `source` may be `"auto"`.
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String>;
}

/// One cached translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub provider: String,
    pub source_lang: String,
    pub target_lang: String,
    pub input_hash: String,
    pub output_text: String,
}

type CacheKey = (String, String, String, String);

fn key_of(provider: &str, source: &str, target: &str, input_hash: &str) -> CacheKey {
    (
        provider.to_string(),
        source.to_ascii_lowercase(),
        target.to_ascii_lowercase(),
        input_hash.to_string(),
    )
}

/// Translation cache keyed by `(provider, source, target, hash(text))`,
/// optionally backed by an append-only JSONL file.
///
/// Lookups take a shared lock; inserts are serialized.
#[derive(Debug, Default)]
pub struct TranslationCache {
    entries: RwLock<HashMap<CacheKey, String>>,
    file: Option<Mutex<PathBuf>>,
}

impl TranslationCache {
    pub fn in_memory() -> Self {
        TranslationCache::default()
    }

    /// Opens (or creates on first insert) a persistent cache file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let r: TranslationRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                    line: n + 1,
                    message: e.to_string(),
                })?;
                entries.insert(
                    key_of(&r.provider, &r.source_lang, &r.target_lang, &r.input_hash),
                    r.output_text,
                );
            }
        }
        Ok(TranslationCache {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(path)),
        })
    }

    pub fn get(&self, provider: &str, source: &str, target: &str, text: &str) -> Option<String> {
        let key = key_of(provider, source, target, &content_hash(text));
        self.entries.read().expect("cache lock").get(&key).cloned()
    }

    pub fn insert(&self, provider: &str, source: &str, target: &str, text: &str, output: &str) -> Result<()> {
        let record = TranslationRecord {
            provider: provider.to_string(),
            source_lang: source.to_string(),
            target_lang: target.to_string(),
            input_hash: content_hash(text),
            output_text: output.to_string(),
        };
        let key = key_of(provider, source, target, &record.input_hash);
        if let Some(file) = &self.file {
            let path = file.lock().expect("cache file lock");
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let mut f = OpenOptions::new().create(true).append(true).open(&*path)?;
            writeln!(f, "{}", serde_json::to_string(&record)?)?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(key, record.output_text);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Counting gate bounding concurrent adapter calls.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        InFlight {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().expect("in-flight lock");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("in-flight lock");
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().expect("in-flight lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Cache-first translation through one adapter.
pub struct Translator {
    adapter: Arc<dyn TranslationAdapter>,
    cache: TranslationCache,
    in_flight: InFlight,
}

impl Translator {
    pub fn new(adapter: Arc<dyn TranslationAdapter>, cache: TranslationCache) -> Self {
        Translator::with_max_in_flight(adapter, cache, DEFAULT_MAX_IN_FLIGHT)
    }

    pub fn with_max_in_flight(
        adapter: Arc<dyn TranslationAdapter>,
        cache: TranslationCache,
        max_in_flight: usize,
    ) -> Self {
        Translator {
            adapter,
            cache,
            in_flight: InFlight::new(max_in_flight),
        }
    }

    pub fn cache(&self) -> &TranslationCache {
        &self.cache
    }

    pub fn provider_id(&self) -> &str {
        self.adapter.provider_id()
    }

    pub fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        validate_lang_tag(target)?;
        if source != "auto" {
            validate_lang_tag(source)?;
        }
        if same_language(source, target) {
            return Ok(text.to_string());
        }
        let provider = self.adapter.provider_id();
        if let Some(hit) = self.cache.get(provider, source, target, text) {
            return Ok(hit);
        }
        let output = {
            let _permit = self.in_flight.acquire();
            self.adapter.translate(text, source, target)?
        };
        if output.trim().is_empty() {
            return Err(Error::ProviderUnavailable(format!(
                "translator `{provider}` returned an empty translation"
            )));
        }
        self.cache.insert(provider, source, target, text, &output)?;
        Ok(output)
    }
}

/// Translate `text` with `translator`; identical languages short-circuit.
pub fn translate(translator: &Translator, text: &str, source: &str, target: &str) -> Result<String> {
    translator.translate(text, source, target)
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    q: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct TranslateResponse {
    translated_text: String,
}

/// Client for a remote `POST /translate` endpoint.
pub struct HttpTranslator {
    id: String,
    url: String,
    agent: ureq::Agent,
}

impl HttpTranslator {
    pub fn new(id: impl Into<String>, base_url: &str) -> Self {
        HttpTranslator {
            id: id.into(),
            url: http::join_url(base_url, "translate"),
            agent: http::agent(Duration::from_secs(60)),
        }
    }
}

impl TranslationAdapter for HttpTranslator {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        let req = TranslateRequest { q: text, source, target };
        let resp: TranslateResponse = http::post_json(&self.agent, &self.url, &req).map_err(|e| match e {
            HttpFailure::Status(400 | 422, msg) => Error::UnsupportedLanguage(msg),
            other => Error::ProviderUnavailable(format!("{}: {other}", self.url)),
        })?;
        Ok(resp.translated_text)
    }
}

/// A recorded translation pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordedTranslation {
    pub q: String,
    pub source: String,
    pub target: String,
    #[serde(rename = "translatedText")]
    pub translated_text: String,
}

/// Replays recorded request/response pairs; anything unrecorded behaves
/// like an unreachable provider.
#[derive(Debug, Clone)]
pub struct RecordedTranslator {
    id: String,
    table: HashMap<(String, String, String), String>,
}

impl RecordedTranslator {
    pub fn new(id: impl Into<String>, records: impl IntoIterator<Item = RecordedTranslation>) -> Self {
        let table = records
            .into_iter()
            .map(|r| {
                (
                    (r.q, r.source.to_ascii_lowercase(), r.target.to_ascii_lowercase()),
                    r.translated_text,
                )
            })
            .collect();
        RecordedTranslator { id: id.into(), table }
    }

    pub fn from_jsonl(id: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
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
        Ok(RecordedTranslator::new(id, records))
    }
}

impl TranslationAdapter for RecordedTranslator {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        self.table
            .get(&(text.to_string(), source.to_ascii_lowercase(), target.to_ascii_lowercase()))
            .cloned()
            .ok_or_else(|| Error::ProviderUnavailable(format!("no recorded translation for {text:?}")))
    }
}

/// An adapter that is always down; useful when only the cache may answer.
#[derive(Debug, Clone)]
pub struct OfflineTranslator {
    id: String,
}

impl OfflineTranslator {
    pub fn new(id: impl Into<String>) -> Self {
        OfflineTranslator { id: id.into() }
    }
}

impl TranslationAdapter for OfflineTranslator {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn translate(&self, _: &str, _: &str, _: &str) -> Result<String> {
        Err(Error::ProviderUnavailable(format!("translator `{}` is offline", self.id)))
    }
}
