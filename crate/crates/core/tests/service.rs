mod common;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use crowdmatch::embed::HashEmbedder;
use crowdmatch::fixtures;
use crowdmatch::matcher::Matcher;
use crowdmatch::service::{default_options, router, ServiceConfig, API_ERROR_CODES};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Api {
    app: Router,
    rt: tokio::runtime::Runtime,
    _dir: tempfile::TempDir,
}

impl Api {
    fn mini() -> Self {
        Self::mini_with(ServiceConfig::default())
    }

    fn mini_with(config: ServiceConfig) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let ws = fixtures::mini_workspace(dir.path()).unwrap();
        fixtures::embed_all(&ws, &HashEmbedder::new(384).unwrap()).unwrap();
        Self::over(ws, dir, config)
    }

    fn study() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let ws = fixtures::study_workspace(dir.path()).unwrap();
        Self::over(ws, dir, ServiceConfig::default())
    }

    fn over(ws: crowdmatch::corpus::Workspace, dir: tempfile::TempDir, config: ServiceConfig) -> Self {
        let matcher = Matcher::from_workspace(ws).unwrap();
        let defaults = default_options(&matcher);
        Api {
            app: router(matcher, defaults, &config),
            rt: tokio::runtime::Runtime::new().unwrap(),
            _dir: dir,
        }
    }

    fn send(&self, req: Request<Body>) -> (StatusCode, String, Value) {
        self.rt.block_on(async {
            let resp = self.app.clone().oneshot(req).await.unwrap();
            let status = resp.status();
            let ctype = resp
                .headers()
                .get(header::CONTENT_TYPE)
                .map(|v| v.to_str().unwrap().to_string())
                .unwrap_or_default();
            let bytes = resp.into_body().collect().await.unwrap().to_bytes();
            let body = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
            (status, ctype, body)
        })
    }

    fn post(&self, path: &str, body: impl Into<String>) -> (StatusCode, Value) {
        let req = Request::post(path)
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.into()))
            .unwrap();
        let (status, ctype, body) = self.send(req);
        assert!(ctype.starts_with("application/json"), "{path}: content type {ctype}");
        (status, body)
    }

    fn get(&self, path: &str) -> (StatusCode, Value) {
        let (status, ctype, body) = self.send(Request::get(path).body(Body::empty()).unwrap());
        assert!(ctype.starts_with("application/json"), "{path}: content type {ctype}");
        (status, body)
    }
}

fn assert_api_error(body: &Value, status: StatusCode, code: &str) {
    assert_eq!(body["status"], status.as_u16(), "{body}");
    assert_eq!(body["code"], code, "{body}");
    assert!(API_ERROR_CODES.contains(&code));
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[test]
fn match_returns_oracle_ranking() {
    let api = Api::mini();
    let (status, body) = api.post("/api/match", json!({"text": "The audio keeps cutting off"}).to_string());
    assert_eq!(status, StatusCode::OK);
    let got: Vec<(u64, f64)> = body["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["issue_iid"].as_u64().unwrap(), c["similarity"].as_f64().unwrap()))
        .collect();

    let entries: Vec<(u64, Vec<f64>)> = fixtures::mini_issues()
        .iter()
        .map(|i| (i.iid, common::hash_embed(&i.title, 384).unwrap()))
        .collect();
    let q = common::hash_embed("The audio keeps cutting off", 384).unwrap();
    assert_eq!(got, common::top_k(&entries, &q, 5, None));
    assert_eq!(body["candidates"][0]["rank"], 1);
    assert_eq!(body["provider_id"], "ref-384");
    let first = &body["candidates"][0];
    assert_eq!(first["percent"].as_f64().unwrap(), (first["similarity"].as_f64().unwrap() * 1000.0).round() / 10.0);
}

#[test]
fn match_rejects_bad_requests() {
    let api = Api::mini();
    let (s, b) = api.post("/api/match", r#"{"text":"audio","k":0}"#);
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_api_error(&b, s, "invalid_argument");

    let (s, b) = api.post("/api/match", r#"{"text":"audio","provider":"nope"}"#);
    assert_eq!(s, StatusCode::CONFLICT);
    assert_api_error(&b, s, "unknown_provider");

    let (s, b) = api.post("/api/match", r#"{"text":"audio","threshold":2}"#);
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_api_error(&b, s, "invalid_argument");

    for bad in ["not json", r#"{"k":3}"#, r#"{"text":"a","extra":1}"#] {
        let (s, b) = api.post("/api/match", bad);
        assert_eq!(s, StatusCode::BAD_REQUEST, "{bad}");
        assert_api_error(&b, s, "invalid_body");
    }

    let (s, b) = api.post("/api/match", r#"{"text":"   "}"#);
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_api_error(&b, s, "empty_text");
}

#[test]
fn match_without_embeddings_is_a_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let ws = fixtures::mini_workspace(dir.path()).unwrap();
    let api = Api::over(ws, dir, ServiceConfig::default());
    let (s, b) = api.post("/api/match", r#"{"text":"audio"}"#);
    assert_eq!(s, StatusCode::CONFLICT);
    assert_api_error(&b, s, "no_embeddings");
}

#[test]
fn class_filter_marks_filtered_out() {
    let api = Api::mini();
    let (s, b) = api.post("/api/match", r#"{"text":"Love it!!!","classify_filter":["bug_report"]}"#);
    assert_eq!(s, StatusCode::OK, "{b}");
    assert_eq!(b["filtered_out"], true);
    assert_eq!(b["label"], "irrelevant");
    assert!(b["candidates"].as_array().unwrap().is_empty());
}

#[test]
fn triage_records_decisions() {
    let api = Api::mini();
    let (_, before) = api.get("/api/stats");
    let gold_before = before["gold_links"].as_u64().unwrap();

    let (s, b) = api.post(
        "/api/triage",
        json!({"review_text": "Video stutters on my tablet", "decision": "linked", "issue_iid": 5}).to_string(),
    );
    assert_eq!(s, StatusCode::CREATED, "{b}");
    assert_eq!(b["decision"]["issue_iid"], 5);
    let (_, after) = api.get("/api/stats");
    assert_eq!(after["gold_links"].as_u64().unwrap(), gold_before + 1);
    assert_eq!(after["reviews"].as_u64().unwrap(), before["reviews"].as_u64().unwrap() + 1);

    let (s, _) = api.post("/api/triage", r#"{"review_id":"r07","decision":"dismissed"}"#);
    assert_eq!(s, StatusCode::CREATED);
    let (_, after_dismiss) = api.get("/api/stats");
    assert_eq!(after_dismiss["gold_links"], after["gold_links"]);

    let (s, b) = api.post("/api/triage", r#"{"review_id":"r08","decision":"linked"}"#);
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_api_error(&b, s, "invalid_body");

    let (s, b) = api.post("/api/triage", r#"{"review_id":"absent-id","decision":"dismissed"}"#);
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_api_error(&b, s, "unknown_review");

    let (s, b) = api.post("/api/triage", r#"{"review_id":"r08","decision":"linked","issue_iid":999}"#);
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_api_error(&b, s, "unknown_issue");

    let (s, _) = api.post("/api/triage", r#"{"review_id":"r08","review_text":"x","decision":"dismissed"}"#);
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = api.post("/api/triage", r#"{"review_id":"r08","decision":"maybe"}"#);
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[test]
fn stats_on_study_sized_corpus() {
    let api = Api::study();
    let (s, b) = api.get("/api/stats");
    assert_eq!(s, StatusCode::OK);
    assert_eq!((b["issues"].as_u64(), b["reviews"].as_u64(), b["gold_links"].as_u64()), (Some(574), Some(69), Some(23)));
    assert_eq!(b["default_provider"], fixtures::SENTENCE_PROVIDER);
    assert!(b["last_eval"].is_null());
}

#[test]
fn issue_listing() {
    let api = Api::study();
    let (s, b) = api.get("/api/issues?query=AUDIO");
    assert_eq!(s, StatusCode::OK);
    let issues = b["issues"].as_array().unwrap();
    assert!(!issues.is_empty());
    assert!(issues.iter().all(|i| i["title"].as_str().unwrap().to_lowercase().contains("audio")));

    let (_, all) = api.get("/api/issues?page=12");
    assert_eq!(all["total"], 574);
    assert_eq!(all["issues"].as_array().unwrap().len(), 24);
    let (s, beyond) = api.get("/api/issues?page=13");
    assert_eq!(s, StatusCode::OK);
    assert!(beyond["issues"].as_array().unwrap().is_empty());

    for bad in ["/api/issues?page=0", "/api/issues?page=abc"] {
        let (s, b) = api.get(bad);
        assert_eq!(s, StatusCode::BAD_REQUEST, "{bad}");
        assert_api_error(&b, s, "invalid_argument");
    }
}

#[test]
fn unknown_routes_and_methods() {
    let api = Api::mini();
    let (s, b) = api.get("/api/nothing");
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_api_error(&b, s, "not_found");
    let (s, b) = api.get("/api/match");
    assert_eq!(s, StatusCode::METHOD_NOT_ALLOWED);
    assert_api_error(&b, s, "method_not_allowed");
}

#[test]
fn static_files_and_cors() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>triage</html>").unwrap();
    let api = Api::mini_with(ServiceConfig {
        cors_origins: vec!["http://localhost:5173".into()],
        static_dir: Some(ui.path().to_path_buf()),
    });
    let (s, ctype, _) = api.send(Request::get("/index.html").body(Body::empty()).unwrap());
    assert_eq!(s, StatusCode::OK);
    assert!(ctype.starts_with("text/html"));

    let resp = api.rt.block_on(
        api.app.clone().oneshot(
            Request::options("/api/match")
                .header(header::ORIGIN, "http://localhost:5173")
                .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
                .body(Body::empty())
                .unwrap(),
        ),
    );
    let resp = resp.unwrap();
    assert_eq!(
        resp.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(),
        "http://localhost:5173"
    );
}
