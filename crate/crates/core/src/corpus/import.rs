use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::corpus::{GoldLink, LinkOrigin, LinkRecord, Workspace, WriteLock};
use crate::error::{Error, Result};
use crate::hash::content_hash;
use crate::model::Review;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportFormat {
    Csv,
    Jsonl,
}

impl ImportFormat {
    /// Guesses from the file extension; anything but `.jsonl`/`.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json" | "ndjson") => ImportFormat::Jsonl,
            _ => ImportFormat::Csv,
        }
    }
}

impl FromStr for ImportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ImportFormat::Csv),
            "jsonl" => Ok(ImportFormat::Jsonl),
            other => Err(Error::InvalidArgument(format!("unknown import format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    /// Rows read from the file.
    pub reviews: usize,
    /// Rows carrying a gold issue iid.
    pub gold_links: usize,
    /// Reviews not previously in the workspace.
    pub new_reviews: usize,
    pub new_gold_links: usize,
}

#[derive(Debug, Deserialize)]
struct Row {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    lang: Option<String>,
    #[serde(default)]
    issue_iid: Option<String>,
}

#[derive(Debug, Deserialize)]
struct JsonRow {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    lang: Option<String>,
    #[serde(default)]
    issue_iid: Option<u64>,
}

struct Parsed {
    line: usize,
    review: Review,
    gold: Option<u64>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn build(
    line: usize,
    id: Option<String>,
    text: String,
    lang: Option<String>,
    default_lang: &str,
    source: &str,
) -> Result<Review> {
    if text.trim().is_empty() {
        return Err(parse_err(line, "empty text"));
    }
    let id = id
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| format!("r-{}", content_hash(&text)));
    let lang = lang
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| default_lang.to_string());
    let mut review = Review::new(id, text, lang).map_err(|e| parse_err(line, e.to_string()))?;
    review.source = source.to_string();
    Ok(review)
}

fn parse_csv(bytes: &[u8], default_lang: &str, source: &str) -> Result<Vec<Parsed>> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if !headers.iter().any(|h| h == "text") {
        return Err(parse_err(1, "missing required column `text`"));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: Row = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        let gold = match row.issue_iid.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse::<u64>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| parse_err(line, format!("invalid issue_iid `{s}`")))?,
            ),
        };
        let review = build(line, row.id, row.text, row.lang, default_lang, source)?;
        out.push(Parsed { line, review, gold });
    }
    Ok(out)
}

fn parse_jsonl(text: &str, default_lang: &str, source: &str) -> Result<Vec<Parsed>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(raw).map_err(|e| parse_err(line, e.to_string()))?;
        if row.issue_iid == Some(0) {
            return Err(parse_err(line, "issue_iid must be positive"));
        }
        let review = build(line, row.id, row.text, row.lang, default_lang, source)?;
        out.push(Parsed {
            line,
            review,
            gold: row.issue_iid,
        });
    }
    Ok(out)
}

/// Imports reviews (and their gold issue links) from a CSV or JSONL file.
///
/// The whole file is validated before anything is written, so a bad row
/// leaves the workspace untouched. Re-importing an identical file is a no-op.
pub fn import_reviews(
    ws: &Workspace,
    lock: &WriteLock,
    path: impl AsRef<Path>,
    format: ImportFormat,
    default_lang: &str,
) -> Result<ImportReport> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let source = format!("import:{}", path.file_name().and_then(|n| n.to_str()).unwrap_or("file"));
    let rows = match format {
        ImportFormat::Csv => parse_csv(&bytes, default_lang, &source)?,
        ImportFormat::Jsonl => {
            let text = String::from_utf8(bytes).map_err(|e| parse_err(0, e.to_string()))?;
            parse_jsonl(&text, default_lang, &source)?
        }
    };

    let mut reviews = ws.review_map()?;
    let gold_by_review: std::collections::HashMap<String, u64> = ws
        .gold_links()?
        .into_iter()
        .map(|g| (g.review_id, g.issue_iid))
        .collect();

    let mut seen = HashSet::new();
    let mut report = ImportReport::default();
    let mut new_links = Vec::new();
    for Parsed { line, review, gold } in rows {
        if !seen.insert(review.id.clone()) {
            return Err(Error::DuplicateId(review.id));
        }
        report.reviews += 1;
        match reviews.get(&review.id) {
            Some(existing) if existing.original_text == review.original_text => {}
            Some(_) => return Err(Error::DuplicateId(review.id)),
            None => {
                report.new_reviews += 1;
                reviews.insert(review.id.clone(), review.clone());
            }
        }
        if let Some(iid) = gold {
            report.gold_links += 1;
            match gold_by_review.get(&review.id) {
                Some(&existing) if existing == iid => {}
                Some(_) => {
                    return Err(parse_err(
                        line,
                        format!("review `{}` already has a different gold link", review.id),
                    ))
                }
                None => new_links.push(LinkRecord::GoldLink(GoldLink {
                    review_id: review.id.clone(),
                    issue_iid: iid,
                    origin: LinkOrigin::Imported,
                    decided_at: Utc::now(),
                })),
            }
        }
    }
    report.new_gold_links = new_links.len();
    if report.new_reviews > 0 {
        ws.save_reviews(lock, reviews.into_values())?;
    }
    ws.append_links(lock, &new_links)?;
    Ok(report)
}
