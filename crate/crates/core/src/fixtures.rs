//! Bundled corpora for examples, tests and demos.
//!
//! * The mini corpus: 12 media-player issues and 10 reviews, 6 of them
//!   gold-linked. Under `ref-384`, 4 of the 6 gold issues land in the top 5.
//! * A synthetic 574-issue / 69-review corpus with 23 gold links and two
//!   recorded providers whose vectors are laid out so that hit@5 is 13/23
//!   for one and 3/23 for the other.
//! * Recorded tracker listing pages for the collector.

use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde_json::json;

use crate::config::ProviderConfig;
use crate::corpus::{
    import_reviews, upsert_embeddings, FixtureTransport, GoldLink, HttpResponse, ImportFormat,
    IssueCollector, LinkOrigin, LinkRecord, RecordKind, Workspace, WorkspaceMeta,
};
use crate::embed::{EmbeddingProvider, RecordedVector};
use crate::error::Result;
use crate::model::{Issue, IssueState, Review};

pub const MINI_ISSUES_JSONL: &str = include_str!("../fixtures/mini/issues.jsonl");
pub const MINI_REVIEWS_CSV: &str = include_str!("../fixtures/mini/reviews.csv");

pub fn mini_issues() -> Vec<Issue> {
    MINI_ISSUES_JSONL
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("bundled mini issues parse"))
        .collect()
}

/// Creates (or reuses) a workspace at `root` holding the mini corpus.
pub fn mini_workspace(root: impl AsRef<Path>) -> Result<Workspace> {
    let root = root.as_ref();
    let ws = Workspace::init(root, Some("mini/player".into()))?;
    let lock = ws.lock()?;
    ws.upsert_issues(&lock, mini_issues())?;
    let csv = root.join("seed").join("mini_reviews.csv");
    std::fs::create_dir_all(csv.parent().unwrap_or(root))?;
    std::fs::write(&csv, MINI_REVIEWS_CSV)?;
    import_reviews(&ws, &lock, &csv, ImportFormat::Csv, "en")?;
    Ok(ws)
}

/// Issues and reviews embedded with `provider`.
pub fn embed_all(ws: &Workspace, provider: &dyn EmbeddingProvider) -> Result<()> {
    let lock = ws.lock()?;
    upsert_embeddings(ws, &lock, provider, RecordKind::Issue)?;
    upsert_embeddings(ws, &lock, provider, RecordKind::Review)?;
    Ok(())
}

pub const STUDY_ISSUES: usize = 574;
pub const STUDY_REVIEWS: usize = 69;
pub const STUDY_GOLD: usize = 23;
/// Recorded provider with 13 of 23 gold issues in the top 5.
pub const SENTENCE_PROVIDER: &str = "recorded-sentence";
/// Recorded provider with 3 of 23 gold issues in the top 5, at ranks 5, 5
/// and 2 with similarities 0.80, 0.80 and 0.83.
pub const POOLED_PROVIDER: &str = "recorded-pooled";
pub const RECORDED_DIM: usize = 48;

const SUBJECTS: [&str; 12] = [
    "Player", "Audio", "Subtitles", "Playlist", "Library", "Search", "Settings", "Login", "Downloads",
    "Notifications", "Widget", "Chromecast",
];
const PROBLEMS: [&str; 8] = [
    "crashes", "freezes", "shows wrong order", "loses state", "is slow", "ignores preferences",
    "fails silently", "displays garbled text",
];
const CONTEXTS: [&str; 6] = [
    "after update", "on startup", "in landscape mode", "on tablets", "when offline", "with dark theme",
];

const OPENERS: [&str; 5] = ["Since yesterday", "Every single time", "On my phone", "After the update", "Sometimes"];
const OBJECTS: [&str; 5] = ["the player", "the sound", "the list", "the screen", "the app"];
const COMPLAINTS: [&str; 3] = ["does something weird", "is not what I expected", "needs work"];

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2022, 3, 1, 12, 0, 0).single().expect("valid date")
}

fn study_title(i: usize) -> String {
    format!("{} {} {}", SUBJECTS[i % 12], PROBLEMS[(i / 12) % 8], CONTEXTS[i / 96])
}

pub fn study_issues() -> Vec<Issue> {
    (0..STUDY_ISSUES)
        .map(|i| {
            let iid = i as u64 + 1;
            Issue {
                iid,
                title: study_title(i),
                title_translated: None,
                description: None,
                labels: vec![if i % 3 == 0 { "feature" } else { "bug" }.to_string()],
                state: if i % 4 == 0 { IssueState::Closed } else { IssueState::Open },
                url: Some(format!("https://gitlab.example.com/demo/app/-/issues/{iid}")),
                created_at: epoch() + Duration::hours(i as i64 * 7),
            }
        })
        .collect()
}

pub fn study_reviews() -> Vec<Review> {
    (0..STUDY_REVIEWS)
        .map(|i| Review {
            id: format!("pr-{:03}", i + 1),
            original_text: format!("{} {} {}", OPENERS[i % 5], OBJECTS[(i / 5) % 5], COMPLAINTS[i / 25]),
            original_lang: "en".into(),
            translated_text: None,
            label: None,
            source: "fixture".into(),
            created_at: epoch() + Duration::days(i as i64),
        })
        .collect()
}

/// Gold issue of the `i`-th gold review (`pr-001` … `pr-023`).
pub fn study_gold_iid(i: usize) -> u64 {
    17 + 23 * i as u64
}

/// Issues that outrank the gold issue for the pooled provider's hits.
const DECOYS: [u64; 4] = [540, 541, 542, 543];

/// Layout of the recorded vectors.
///
/// Axis 0 is shared by everything, axis 1 by every issue without its own
/// axis, axis 2 absorbs each review's remaining norm, and gold and decoy
/// issues get one private axis each. An issue is `A·e0 + B·e_own` and a
/// review is `α·e0 + Σ β_j·e_j + γ·e2`, so the review meets every issue at
/// cosine `A·α = BASE` except the ones it puts weight on, which it meets at
/// `A·α + B·β_j`.
struct Geometry {
    axis_issues: Vec<u64>,
}

const A: f64 = 0.95;
const BASE: f64 = 0.75;

impl Geometry {
    fn new() -> Self {
        let mut axis_issues: Vec<u64> = (0..STUDY_GOLD).map(study_gold_iid).collect();
        axis_issues.extend(DECOYS);
        Geometry { axis_issues }
    }

    fn b() -> f64 {
        (1.0 - A * A).sqrt()
    }

    fn issue(&self, iid: u64) -> Vec<f64> {
        let mut v = vec![0.0; RECORDED_DIM];
        v[0] = A;
        match self.axis_issues.iter().position(|&x| x == iid) {
            Some(p) => v[3 + p] = Self::b(),
            None => v[1] = Self::b(),
        }
        v
    }

    /// Review vector meeting each `(iid, cosine)` target exactly and every
    /// other issue at `BASE`.
    fn review(&self, targets: &[(u64, f64)]) -> Vec<f64> {
        let mut v = vec![0.0; RECORDED_DIM];
        let alpha = BASE / A;
        v[0] = alpha;
        let mut used = alpha * alpha;
        for &(iid, cos) in targets {
            let p = self
                .axis_issues
                .iter()
                .position(|&x| x == iid)
                .expect("target issue has an axis");
            let beta = (cos - BASE) / Self::b();
            v[3 + p] = beta;
            used += beta * beta;
        }
        assert!(used < 1.0, "targets exceed the unit sphere");
        v[2] = (1.0 - used).sqrt();
        v
    }
}

fn sentence_targets(i: usize) -> Vec<(u64, f64)> {
    let gold = study_gold_iid(i);
    if i < 13 {
        vec![(gold, 0.78 + 0.01 * (i % 8) as f64)]
    } else {
        vec![(gold, 0.70)]
    }
}

fn pooled_targets(i: usize) -> Vec<(u64, f64)> {
    let gold = study_gold_iid(i);
    match i {
        // Four decoys above the gold issue: rank 5.
        0 | 1 => {
            let mut t = vec![(gold, 0.80)];
            t.extend(DECOYS.iter().enumerate().map(|(n, &d)| (d, 0.81 + 0.01 * n as f64)));
            t
        }
        // One decoy above: rank 2.
        2 => vec![(gold, 0.83), (DECOYS[0], 0.85)],
        _ => vec![(gold, if i.is_multiple_of(2) { 0.70 } else { 0.72 })],
    }
}

fn recorded(targets: fn(usize) -> Vec<(u64, f64)>) -> Vec<RecordedVector> {
    let g = Geometry::new();
    let mut out: Vec<RecordedVector> = study_issues()
        .into_iter()
        .map(|i| RecordedVector {
            vector: g.issue(i.iid),
            text: i.title,
        })
        .collect();
    for (i, r) in study_reviews().into_iter().enumerate() {
        let t = if i < STUDY_GOLD { targets(i) } else { Vec::new() };
        out.push(RecordedVector {
            text: r.original_text,
            vector: g.review(&t),
        });
    }
    out
}

pub fn sentence_recording() -> Vec<RecordedVector> {
    recorded(sentence_targets)
}

pub fn pooled_recording() -> Vec<RecordedVector> {
    recorded(pooled_targets)
}

fn write_recording(path: &Path, records: &[RecordedVector]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Creates the 574-issue corpus at `root`, with both recorded providers
/// configured and all issue and review vectors stored.
pub fn study_workspace(root: impl AsRef<Path>) -> Result<Workspace> {
    let root = root.as_ref();
    let mut ws = Workspace::init(root, Some("demo/app".into()))?;
    let lock = ws.lock()?;
    write_recording(&root.join("recordings/sentence.jsonl"), &sentence_recording())?;
    write_recording(&root.join("recordings/pooled.jsonl"), &pooled_recording())?;
    let mut meta: WorkspaceMeta = ws.meta().clone();
    meta.config.providers = vec![
        ProviderConfig::Recorded {
            id: SENTENCE_PROVIDER.into(),
            dim: RECORDED_DIM,
            path: "recordings/sentence.jsonl".into(),
        },
        ProviderConfig::Recorded {
            id: POOLED_PROVIDER.into(),
            dim: RECORDED_DIM,
            path: "recordings/pooled.jsonl".into(),
        },
    ];
    meta.config.default_provider = Some(SENTENCE_PROVIDER.into());
    ws.save_meta(&lock, meta)?;

    ws.upsert_issues(&lock, study_issues())?;
    ws.save_reviews(&lock, study_reviews())?;
    if ws.gold_links()?.is_empty() {
        let links: Vec<LinkRecord> = (0..STUDY_GOLD)
            .map(|i| {
                LinkRecord::GoldLink(GoldLink {
                    review_id: format!("pr-{:03}", i + 1),
                    issue_iid: study_gold_iid(i),
                    origin: LinkOrigin::Imported,
                    decided_at: epoch(),
                })
            })
            .collect();
        ws.append_links(&lock, &links)?;
    }
    let registry = crate::config::build_registry(&ws)?;
    for id in [SENTENCE_PROVIDER, POOLED_PROVIDER] {
        let provider = registry.get(id)?;
        upsert_embeddings(&ws, &lock, provider.as_ref(), RecordKind::Issue)?;
        upsert_embeddings(&ws, &lock, provider.as_ref(), RecordKind::Review)?;
    }
    drop(lock);
    Ok(ws)
}

/// One issue as the tracker's listing endpoint returns it.
pub fn tracker_json(issue: &Issue) -> serde_json::Value {
    json!({
        "id": 100_000 + issue.iid,
        "iid": issue.iid,
        "project_id": 4242,
        "title": issue.title,
        "description": issue.description,
        "labels": issue.labels,
        "state": match issue.state {
            IssueState::Open => "opened",
            IssueState::Closed => "closed",
        },
        "web_url": issue.url,
        "created_at": issue.created_at.to_rfc3339(),
        "updated_at": issue.created_at.to_rfc3339(),
        "author": {"username": "reporter"},
    })
}

/// Records the listing pages for `issues` on `transport`, paged the way
/// `collector` will ask for them.
pub fn record_tracker_pages(
    transport: &FixtureTransport,
    collector: &IssueCollector,
    project_ref: &str,
    issues: &[Issue],
) {
    let per_page = collector.config().per_page.max(1) as usize;
    let pages: Vec<&[Issue]> = if issues.is_empty() {
        vec![&[]]
    } else {
        issues.chunks(per_page).collect()
    };
    let total_pages = pages.len();
    for (n, chunk) in pages.into_iter().enumerate() {
        let page = n + 1;
        let body = serde_json::Value::Array(chunk.iter().map(tracker_json).collect()).to_string();
        let next = if page < total_pages { (page + 1).to_string() } else { String::new() };
        transport.push(
            collector.page_url(project_ref, page as u32),
            HttpResponse::ok(body)
                .header("X-Page", page.to_string())
                .header("X-Per-Page", per_page.to_string())
                .header("X-Next-Page", next)
                .header("X-Total", issues.len().to_string())
                .header("X-Total-Pages", total_pages.to_string()),
        );
    }
}
