//! Blocking JSON-over-HTTP helpers shared by the remote adapters.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub(crate) enum HttpFailure {
    /// Non-2xx response; message taken from the `{"error": ...}` body when present.
    Status(u16, String),
    Transport(String),
    Decode(String),
}

impl std::fmt::Display for HttpFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HttpFailure::Status(code, msg) => write!(f, "HTTP {code}: {msg}"),
            HttpFailure::Transport(msg) => write!(f, "transport error: {msg}"),
            HttpFailure::Decode(msg) => write!(f, "malformed response: {msg}"),
        }
    }
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

pub(crate) fn post_json<B: Serialize, T: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    body: &B,
) -> Result<T, HttpFailure> {
    let body = serde_json::to_value(body).map_err(|e| HttpFailure::Decode(e.to_string()))?;
    match agent.post(url).send_json(body) {
        Ok(resp) => resp
            .into_json::<T>()
            .map_err(|e| HttpFailure::Decode(e.to_string())),
        Err(ureq::Error::Status(code, resp)) => {
            let text = resp.into_string().unwrap_or_default();
            let msg = serde_json::from_str::<ErrorBody>(&text)
                .map(|b| b.error)
                .unwrap_or(text);
            Err(HttpFailure::Status(code, msg))
        }
        Err(ureq::Error::Transport(t)) => Err(HttpFailure::Transport(t.to_string())),
    }
}
