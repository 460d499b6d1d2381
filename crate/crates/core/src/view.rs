//! Request and response shapes shared by the command line and the HTTP API.
//!
//! Both surfaces serialize [`MatchResponse`] with `serde_json::to_string`, so
//! the same query yields the same bytes from either one.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::default_provider;
use crate::corpus::Workspace;
use crate::embed::ProviderRegistry;
use crate::error::{Error, Result};
use crate::eval::load_last_report;
use crate::matcher::{MatchOptions, MatchResult, Matcher};
use crate::model::{percent, Issue, IssueState, ReviewClass};

/// Body of a match query. Only `text` is required.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRequest {
    pub text: String,
    #[serde(default)]
    pub lang: Option<String>,
    #[serde(default)]
    pub provider: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub classify_filter: Option<Vec<String>>,
    #[serde(default)]
    pub translate_to: Option<String>,
}

impl MatchRequest {
    /// Options with unset fields taken from `defaults`.
    pub fn options(&self, defaults: &MatchOptions) -> Result<MatchOptions> {
        let classify_filter = match &self.classify_filter {
            None => defaults.classify_filter.clone(),
            Some(names) => Some(
                names
                    .iter()
                    .map(|n| n.parse::<ReviewClass>())
                    .collect::<Result<BTreeSet<_>>>()?,
            ),
        };
        Ok(MatchOptions {
            provider: self.provider.clone().unwrap_or_else(|| defaults.provider.clone()),
            k: self.k.unwrap_or(defaults.k),
            threshold: self.threshold.or(defaults.threshold),
            translate_to: self.translate_to.clone().or_else(|| defaults.translate_to.clone()),
            classify_filter,
            classify: defaults.classify,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub rank: usize,
    pub issue_iid: u64,
    pub title: String,
    pub url: Option<String>,
    /// Raw cosine.
    pub similarity: f64,
    /// Cosine × 100, one decimal, half-up.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_text: Option<String>,
    pub provider_id: String,
    pub k_requested: usize,
    pub threshold_applied: Option<f64>,
    pub filtered_out: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translated_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ReviewClass>,
    pub candidates: Vec<CandidateView>,
}

impl MatchResponse {
    pub fn from_result(result: &MatchResult, issues: &BTreeMap<u64, Issue>) -> Self {
        MatchResponse {
            review_id: result.review_id.clone(),
            query_text: result.query_text.clone(),
            provider_id: result.provider_id.clone(),
            k_requested: result.k_requested,
            threshold_applied: result.threshold_applied,
            filtered_out: result.filtered_out,
            translated_text: result.translated_text.clone(),
            label: result.label,
            candidates: result
                .candidates
                .iter()
                .map(|c| {
                    let issue = issues.get(&c.issue_iid);
                    CandidateView {
                        rank: c.rank,
                        issue_iid: c.issue_iid,
                        title: issue.map(|i| i.title.clone()).unwrap_or_default(),
                        url: issue.and_then(|i| i.url.clone()),
                        similarity: c.similarity,
                        percent: percent(c.similarity),
                    }
                })
                .collect(),
        }
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        if let Some(t) = &self.translated_text {
            out.push_str(&format!("translation: {t}\n"));
        }
        if let Some(l) = self.label {
            out.push_str(&format!("class: {l}\n"));
        }
        if self.filtered_out {
            out.push_str("filtered out by class filter; no candidates\n");
            return out;
        }
        if self.candidates.is_empty() {
            out.push_str("no candidates\n");
            return out;
        }
        out.push_str(&format!("{:>4} {:>6} {:>7}  {}\n", "rank", "issue", "sim", "title"));
        for c in &self.candidates {
            out.push_str(&format!(
                "{:>4} {:>6} {:>6.1}%  {}\n",
                c.rank,
                format!("#{}", c.issue_iid),
                c.percent,
                c.title
            ));
        }
        out
    }
}

/// Runs one match query and attaches issue titles and URLs.
pub fn run_match(matcher: &Matcher, request: &MatchRequest, defaults: &MatchOptions) -> Result<MatchResponse> {
    let opts = request.options(defaults)?;
    let lang = request.lang.as_deref().unwrap_or("en");
    let result = matcher.match_text(&request.text, lang, &opts)?;
    let issues = matcher.workspace().issue_map()?;
    Ok(MatchResponse::from_result(&result, &issues))
}

/// Summary of the most recent stored evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub provider_id: String,
    pub k: usize,
    pub n_gold: usize,
    pub n_hits: usize,
    pub hit_rate: f64,
    pub hit_rate_percent: f64,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub project: Option<String>,
    pub issues: usize,
    pub reviews: usize,
    pub gold_links: usize,
    /// Stored vectors (issues and reviews) per provider.
    pub embeddings: BTreeMap<String, usize>,
    pub providers: Vec<String>,
    pub default_provider: String,
    pub last_eval: Option<EvalSummary>,
}

pub fn stats(ws: &Workspace, registry: &ProviderRegistry) -> Result<Stats> {
    let last_eval = load_last_report(ws)?.map(|r| EvalSummary {
        hit_rate_percent: r.hit_rate_percent(),
        provider_id: r.provider_id,
        k: r.k,
        n_gold: r.n_gold,
        n_hits: r.n_hits,
        hit_rate: r.hit_rate,
        generated_at: r.generated_at,
    });
    Ok(Stats {
        project: ws.meta().project.clone(),
        issues: ws.issues()?.len(),
        reviews: ws.reviews()?.len(),
        gold_links: ws.gold_links()?.len(),
        embeddings: ws.embedding_counts()?,
        providers: registry.list(),
        default_provider: default_provider(ws),
        last_eval,
    })
}

impl Stats {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.project {
            out.push_str(&format!("project     {p}\n"));
        }
        out.push_str(&format!("issues      {}\n", self.issues));
        out.push_str(&format!("reviews     {}\n", self.reviews));
        out.push_str(&format!("gold links  {}\n", self.gold_links));
        out.push_str(&format!("default     {}\n", self.default_provider));
        out.push_str("embeddings\n");
        if self.embeddings.is_empty() {
            out.push_str("  none\n");
        }
        for (provider, n) in &self.embeddings {
            out.push_str(&format!("  {provider:<32} {n}\n"));
        }
        match &self.last_eval {
            Some(e) => out.push_str(&format!(
                "last eval   {} hit@{} {}/{} ({:.1}%)\n",
                e.provider_id, e.k, e.n_hits, e.n_gold, e.hit_rate_percent
            )),
            None => out.push_str("last eval   no evaluation run\n"),
        }
        out
    }
}

pub const ISSUES_PER_PAGE: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueView {
    pub iid: u64,
    pub title: String,
    pub state: IssueState,
    pub url: Option<String>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssuePage {
    pub query: Option<String>,
    pub page: usize,
    pub per_page: usize,
    /// Issues matching the query, over all pages.
    pub total: usize,
    pub issues: Vec<IssueView>,
}

/// Issues whose title contains `query` (case-insensitive), 50 per page,
/// pages numbered from 1.
pub fn list_issues(ws: &Workspace, query: Option<&str>, page: usize) -> Result<IssuePage> {
    if page == 0 {
        return Err(Error::InvalidArgument("page numbers start at 1".into()));
    }
    let needle = query.map(str::trim).filter(|q| !q.is_empty()).map(str::to_lowercase);
    let matching: Vec<Issue> = ws
        .issues()?
        .into_iter()
        .filter(|i| needle.as_ref().is_none_or(|n| i.title.to_lowercase().contains(n.as_str())))
        .collect();
    let total = matching.len();
    let issues = matching
        .into_iter()
        .skip((page - 1).saturating_mul(ISSUES_PER_PAGE))
        .take(ISSUES_PER_PAGE)
        .map(|i| IssueView {
            iid: i.iid,
            title: i.title,
            state: i.state,
            url: i.url,
            labels: i.labels,
        })
        .collect();
    Ok(IssuePage {
        query: needle,
        page,
        per_page: ISSUES_PER_PAGE,
        total,
        issues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_defaults_and_filter_aliases() {
        let req: MatchRequest = serde_json::from_str(r#"{"text":"x","k":3,"classify_filter":["bug"]}"#).unwrap();
        let opts = req.options(&MatchOptions::default()).unwrap();
        assert_eq!(opts.k, 3);
        assert_eq!(opts.provider, "ref-384");
        assert!(opts.classify_filter.unwrap().contains(&ReviewClass::BugReport));
        assert!(serde_json::from_str::<MatchRequest>(r#"{"text":"x","bogus":1}"#).is_err());
        let bad: MatchRequest = serde_json::from_str(r#"{"text":"x","classify_filter":["nope"]}"#).unwrap();
        assert!(bad.options(&MatchOptions::default()).is_err());
    }

    #[test]
    fn issue_listing_pages() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::init(dir.path(), None).unwrap();
        let lock = ws.lock().unwrap();
        ws.upsert_issues(
            &lock,
            (1..=120).map(|i| Issue::new(i, if i % 10 == 0 { format!("AUDIO glitch {i}") } else { format!("other {i}") }).unwrap()),
        )
        .unwrap();
        let p = list_issues(&ws, None, 3).unwrap();
        assert_eq!((p.total, p.issues.len(), p.issues[0].iid), (120, 20, 101));
        let p = list_issues(&ws, Some("audio"), 1).unwrap();
        assert_eq!(p.total, 12);
        assert!(p.issues.iter().all(|i| i.title.to_lowercase().contains("audio")));
        assert!(list_issues(&ws, None, 9).unwrap().issues.is_empty());
        assert!(list_issues(&ws, None, 0).is_err());
    }
}
