//! GitLab-style REST issue collector.
//!
//! Pages through `GET {base}/api/v4/projects/{id}/issues?per_page=100&page=N`
//! following the `X-Next-Page` header. Every page is persisted as soon as it
//! arrives and the next page number is checkpointed, so an interrupted run
//! resumes where it stopped.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};

use crate::corpus::{write_atomic, Workspace, WriteLock};
use crate::enrich::Enricher;
use crate::error::{Error, Result};
use crate::model::{Issue, IssueState};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        HttpResponse {
            status: 200,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn with_status(status: u16, body: impl Into<String>) -> Self {
        HttpResponse {
            status,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_string(), value.into()));
        self
    }

    pub fn get_header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Minimal blocking GET, so recorded fixtures can stand in for the network.
pub trait HttpTransport: Send + Sync {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<HttpResponse>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        UreqTransport {
            agent: crate::http::agent(timeout),
        }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        UreqTransport::new(Duration::from_secs(30))
    }
}

fn into_response(resp: ureq::Response) -> Result<HttpResponse> {
    let status = resp.status();
    let headers = resp
        .headers_names()
        .into_iter()
        .filter_map(|n| resp.header(&n).map(|v| (n.clone(), v.to_string())))
        .collect();
    let body = resp.into_string().map_err(|e| Error::Network(e.to_string()))?;
    Ok(HttpResponse { status, headers, body })
}

impl HttpTransport for UreqTransport {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<HttpResponse> {
        let mut req = self.agent.get(url);
        for (k, v) in headers {
            req = req.set(k, v);
        }
        match req.call() {
            Ok(resp) => into_response(resp),
            Err(ureq::Error::Status(_, resp)) => into_response(resp),
            Err(ureq::Error::Transport(t)) => Err(Error::Network(t.to_string())),
        }
    }
}

/// Serves recorded responses by exact URL. Each URL replays its queue in
/// order and then keeps repeating the last response.
#[derive(Default)]
pub struct FixtureTransport {
    responses: Mutex<HashMap<String, Vec<HttpResponse>>>,
    failures: Mutex<HashMap<String, usize>>,
    requests: Mutex<Vec<Request>>,
}

/// A request seen by [`FixtureTransport`]: URL and headers.
pub type Request = (String, Vec<(String, String)>);

impl FixtureTransport {
    pub fn new() -> Self {
        FixtureTransport::default()
    }

    pub fn push(&self, url: impl Into<String>, response: HttpResponse) {
        self.responses
            .lock()
            .expect("fixture lock")
            .entry(url.into())
            .or_default()
            .push(response);
    }

    /// The next `times` requests to `url` fail with a network error.
    pub fn fail(&self, url: impl Into<String>, times: usize) {
        self.failures.lock().expect("fixture lock").insert(url.into(), times);
    }

    /// Every request seen so far, with its headers.
    pub fn requests(&self) -> Vec<Request> {
        self.requests.lock().expect("fixture lock").clone()
    }
}

impl HttpTransport for FixtureTransport {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<HttpResponse> {
        self.requests
            .lock()
            .expect("fixture lock")
            .push((url.to_string(), headers.to_vec()));
        if let Some(left) = self.failures.lock().expect("fixture lock").get_mut(url) {
            if *left > 0 {
                *left -= 1;
                return Err(Error::Network(format!("connection reset ({url})")));
            }
        }
        let mut responses = self.responses.lock().expect("fixture lock");
        let queue = responses
            .get_mut(url)
            .ok_or_else(|| Error::Network(format!("no recorded response for {url}")))?;
        if queue.len() > 1 {
            Ok(queue.remove(0))
        } else {
            Ok(queue[0].clone())
        }
    }
}

#[derive(Debug, Clone)]
pub struct CollectorConfig {
    pub per_page: u32,
    pub token: Option<String>,
    /// Attempts after a 429 before giving up.
    pub max_retries: u32,
    /// Upper bound on a single `Retry-After` sleep.
    pub max_retry_wait: Duration,
    /// Source language handed to the translator (`auto` by default).
    pub source_lang: String,
}

impl Default for CollectorConfig {
    fn default() -> Self {
        CollectorConfig {
            per_page: 100,
            token: None,
            max_retries: 3,
            max_retry_wait: Duration::from_secs(60),
            source_lang: "auto".to_string(),
        }
    }
}

pub struct IssueCollector {
    transport: Arc<dyn HttpTransport>,
    base_url: String,
    config: CollectorConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectReport {
    pub pages_fetched: usize,
    pub issues_fetched: usize,
    /// Issues in the workspace after the run.
    pub stored_total: usize,
    /// First page requested when a previous run was resumed.
    pub resumed_from: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CollectState {
    project: String,
    next_page: u32,
}

/// The fields consumed from the tracker's issue JSON.
#[derive(Debug, Deserialize)]
struct TrackerIssue {
    iid: u64,
    title: String,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    labels: Vec<String>,
    state: String,
    #[serde(default)]
    web_url: Option<String>,
    created_at: DateTime<Utc>,
}

impl TrackerIssue {
    fn into_issue(self) -> Issue {
        Issue {
            iid: self.iid,
            title: self.title,
            title_translated: None,
            description: self.description.filter(|d| !d.is_empty()),
            labels: self.labels,
            state: if self.state == "closed" {
                IssueState::Closed
            } else {
                IssueState::Open
            },
            url: self.web_url,
            created_at: self.created_at,
        }
    }
}

impl IssueCollector {
    pub fn new(transport: Arc<dyn HttpTransport>, base_url: impl Into<String>, config: CollectorConfig) -> Self {
        IssueCollector {
            transport,
            base_url: base_url.into(),
            config,
        }
    }

    pub fn config(&self) -> &CollectorConfig {
        &self.config
    }

    /// Listing URL for one page; `project_ref` may be a numeric id or a
    /// `group/project` path.
    pub fn page_url(&self, project_ref: &str, page: u32) -> String {
        format!(
            "{}/api/v4/projects/{}/issues?per_page={}&page={}",
            self.base_url.trim_end_matches('/'),
            utf8_percent_encode(project_ref, NON_ALPHANUMERIC),
            self.config.per_page,
            page
        )
    }

    fn headers(&self) -> Vec<(String, String)> {
        match &self.config.token {
            Some(t) => vec![("PRIVATE-TOKEN".to_string(), t.clone())],
            None => Vec::new(),
        }
    }

    fn fetch_page(&self, url: &str) -> Result<HttpResponse> {
        let headers = self.headers();
        let mut attempts = 0;
        loop {
            let resp = self.transport.get(url, &headers)?;
            match resp.status {
                200..=299 => return Ok(resp),
                401 | 403 => {
                    return Err(Error::AuthFailure(format!("HTTP {} from {url}", resp.status)))
                }
                429 => {
                    let retry_after = resp.get_header("retry-after").and_then(|v| v.trim().parse::<u64>().ok());
                    if attempts >= self.config.max_retries {
                        return Err(Error::RateLimited { retry_after });
                    }
                    attempts += 1;
                    let wait = Duration::from_secs(retry_after.unwrap_or(1)).min(self.config.max_retry_wait);
                    log::info!("rate limited; retrying {url} in {wait:?}");
                    std::thread::sleep(wait);
                }
                status => return Err(Error::Network(format!("HTTP {status} from {url}"))),
            }
        }
    }
}

/// Fetches every issue of `project_ref` into the workspace (upsert by iid).
///
/// With `translate_to`, titles are translated through `enricher` and stored
/// in `title_translated`.
pub fn collect_issues(
    ws: &Workspace,
    lock: &WriteLock,
    collector: &IssueCollector,
    project_ref: &str,
    translate_to: Option<&str>,
    enricher: Option<&Enricher>,
) -> Result<CollectReport> {
    let state_path = ws.collect_state_path();
    let resumed = std::fs::read_to_string(&state_path)
        .ok()
        .and_then(|s| serde_json::from_str::<CollectState>(&s).ok())
        .filter(|s| s.project == project_ref)
        .map(|s| s.next_page);
    let mut page = resumed.unwrap_or(1);
    let mut report = CollectReport {
        resumed_from: resumed,
        stored_total: ws.issues()?.len(),
        ..CollectReport::default()
    };

    loop {
        let url = collector.page_url(project_ref, page);
        let resp = collector.fetch_page(&url)?;
        let raw: Vec<TrackerIssue> = serde_json::from_str(&resp.body)
            .map_err(|e| Error::Network(format!("malformed issue page {page}: {e}")))?;
        let mut issues: Vec<Issue> = raw.into_iter().map(TrackerIssue::into_issue).collect();
        if let Some(target) = translate_to {
            let enricher = enricher.ok_or_else(|| {
                Error::ProviderUnavailable("translation requested but no enricher given".into())
            })?;
            for issue in &mut issues {
                issue.title_translated =
                    Some(enricher.translate(&issue.title, &collector.config.source_lang, target)?);
            }
        }
        report.pages_fetched += 1;
        report.issues_fetched += issues.len();
        report.stored_total = ws.upsert_issues(lock, issues)?;

        let next = resp
            .get_header("x-next-page")
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<u32>()
                    .map_err(|_| Error::Network(format!("bad X-Next-Page header `{s}`")))
            })
            .transpose()?;
        match next {
            Some(n) => {
                let state = CollectState {
                    project: project_ref.to_string(),
                    next_page: n,
                };
                write_atomic(&state_path, &serde_json::to_vec(&state)?)?;
                page = n;
            }
            None => {
                let _ = std::fs::remove_file(&state_path);
                return Ok(report);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(iids: std::ops::RangeInclusive<u64>) -> String {
        let items: Vec<serde_json::Value> = iids
            .map(|i| {
                serde_json::json!({
                    "iid": i, "title": format!("Issue {i}"), "description": null,
                    "labels": ["bug"], "state": if i % 2 == 0 { "closed" } else { "opened" },
                    "web_url": format!("https://example.org/p/-/issues/{i}"),
                    "created_at": "2024-01-02T03:04:05.000Z", "author": {"id": 1}
                })
            })
            .collect();
        serde_json::to_string(&items).unwrap()
    }

    fn setup(token: Option<&str>) -> (tempfile::TempDir, Workspace, Arc<FixtureTransport>, IssueCollector) {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::init(dir.path(), None).unwrap();
        let transport = Arc::new(FixtureTransport::new());
        let config = CollectorConfig {
            per_page: 2,
            token: token.map(String::from),
            max_retry_wait: Duration::from_millis(1),
            ..CollectorConfig::default()
        };
        let collector = IssueCollector::new(transport.clone(), "https://gl.test", config);
        (dir, ws, transport, collector)
    }

    #[test]
    fn url_shape_and_encoding() {
        let (_d, _ws, _t, c) = setup(None);
        assert_eq!(
            c.page_url("group/app", 3),
            "https://gl.test/api/v4/projects/group%2Fapp/issues?per_page=2&page=3"
        );
    }

    #[test]
    fn pages_until_no_next_header() {
        let (_d, ws, t, c) = setup(Some("s3cret"));
        t.push(c.page_url("7", 1), HttpResponse::ok(page(1..=2)).header("X-Next-Page", "2"));
        t.push(c.page_url("7", 2), HttpResponse::ok(page(3..=3)).header("X-Next-Page", ""));
        let lock = ws.lock().unwrap();
        let r = collect_issues(&ws, &lock, &c, "7", None, None).unwrap();
        assert_eq!((r.pages_fetched, r.issues_fetched, r.stored_total), (2, 3, 3));
        let issues = ws.issues().unwrap();
        assert_eq!(issues[1].state, IssueState::Closed);
        assert_eq!(issues[0].url.as_deref(), Some("https://example.org/p/-/issues/1"));
        let reqs = t.requests();
        assert_eq!(reqs[0].1, vec![("PRIVATE-TOKEN".to_string(), "s3cret".to_string())]);
    }

    #[test]
    fn auth_and_server_errors() {
        let (_d, ws, t, c) = setup(None);
        t.push(c.page_url("7", 1), HttpResponse::with_status(401, "{\"message\":\"401 Unauthorized\"}"));
        let lock = ws.lock().unwrap();
        assert!(matches!(collect_issues(&ws, &lock, &c, "7", None, None), Err(Error::AuthFailure(_))));
        t.push(c.page_url("8", 1), HttpResponse::with_status(502, "bad gateway"));
        assert!(matches!(collect_issues(&ws, &lock, &c, "8", None, None), Err(Error::Network(_))));
    }

    #[test]
    fn honors_retry_after() {
        let (_d, ws, t, c) = setup(None);
        let url = c.page_url("7", 1);
        t.push(url.clone(), HttpResponse::with_status(429, "").header("Retry-After", "0"));
        t.push(url.clone(), HttpResponse::ok(page(1..=2)));
        let lock = ws.lock().unwrap();
        assert_eq!(collect_issues(&ws, &lock, &c, "7", None, None).unwrap().stored_total, 2);

        let url = c.page_url("9", 1);
        t.push(url, HttpResponse::with_status(429, "").header("Retry-After", "5"));
        assert!(matches!(
            collect_issues(&ws, &lock, &c, "9", None, None),
            Err(Error::RateLimited { retry_after: Some(5) })
        ));
    }
}
