use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{self, HttpFailure};
use crate::model::ReviewClass;

/// Assigns one of the three feedback classes to a review text.
pub trait ReviewClassifier: Send + Sync {
    fn classifier_id(&self) -> &str;

    fn classify(&self, text: &str) -> Result<ReviewClass>;
}

/// Keywords that vote for one class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierRule {
    pub class: ReviewClass,
    pub keywords: Vec<String>,
}

const BUG_KEYWORDS: &[&str] = &[
    "crash", "error", "bug", "freeze", "frozen", "broken", "fails", "fail", "stuck",
    "doesn't work", "not working", "won't open", "stops working", "stopped working", "cuts off",
    "cutting off", "drain",
];

const FEATURE_KEYWORDS: &[&str] = &[
    "add", "wish", "please", "feature", "would be", "could you", "suggest", "missing", "option",
];

/// Lowercases, folds typographic apostrophes and reduces everything else
/// that is not a letter, digit or apostrophe to single spaces, padded on
/// both sides.
fn canonical(text: &str) -> String {
    let mut out = String::from(" ");
    let mut last_space = true;
    for ch in text.to_lowercase().chars() {
        let ch = if ch == '\u{2019}' { '\'' } else { ch };
        if ch.is_alphanumeric() || ch == '\'' {
            out.push(ch);
            last_space = false;
        } else if !last_space {
            out.push(' ');
            last_space = true;
        }
    }
    if !last_space {
        out.push(' ');
    }
    out
}

/// Single words match as word prefixes ("crash" fires on "crashes");
/// phrases match at a word boundary.
fn keyword_fires(canonical_text: &str, keyword: &str) -> bool {
    canonical_text.contains(&format!(" {keyword}"))
}

/// The keyword baseline. Bug keywords take precedence over feature keywords.
#[derive(Debug, Clone)]
pub struct RuleClassifier {
    rules: Vec<ClassifierRule>,
}

impl RuleClassifier {
    pub fn new(rules: Vec<ClassifierRule>) -> Self {
        RuleClassifier { rules }
    }

    pub fn rules(&self) -> &[ClassifierRule] {
        &self.rules
    }
}

impl Default for RuleClassifier {
    fn default() -> Self {
        let rule = |class, words: &[&str]| ClassifierRule {
            class,
            keywords: words.iter().map(|w| w.to_string()).collect(),
        };
        RuleClassifier::new(vec![
            rule(ReviewClass::BugReport, BUG_KEYWORDS),
            rule(ReviewClass::FeatureRequest, FEATURE_KEYWORDS),
        ])
    }
}

impl ReviewClassifier for RuleClassifier {
    fn classifier_id(&self) -> &str {
        "rules-v1"
    }

    fn classify(&self, text: &str) -> Result<ReviewClass> {
        classify_with(&self.rules, text)
    }
}

fn classify_with(rules: &[ClassifierRule], text: &str) -> Result<ReviewClass> {
    if text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let canon = canonical(text);
    for rule in rules {
        if rule.keywords.iter().any(|k| keyword_fires(&canon, k)) {
            return Ok(rule.class);
        }
    }
    Ok(ReviewClass::Irrelevant)
}

/// Classifies with the shipped rule table.
pub fn classify_review(text: &str) -> Result<ReviewClass> {
    RuleClassifier::default().classify(text)
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ClassifyResponse {
    label: String,
}

/// Client for a remote `POST /classify` endpoint.
pub struct HttpClassifier {
    url: String,
    agent: ureq::Agent,
}

impl HttpClassifier {
    pub fn new(base_url: &str) -> Self {
        HttpClassifier {
            url: http::join_url(base_url, "classify"),
            agent: http::agent(Duration::from_secs(30)),
        }
    }
}

impl ReviewClassifier for HttpClassifier {
    fn classifier_id(&self) -> &str {
        "http"
    }

    fn classify(&self, text: &str) -> Result<ReviewClass> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let resp: ClassifyResponse = http::post_json(&self.agent, &self.url, &ClassifyRequest { text })
            .map_err(|e: HttpFailure| Error::ProviderUnavailable(format!("{}: {e}", self.url)))?;
        match resp.label.as_str() {
            "bug" => Ok(ReviewClass::BugReport),
            "feature" => Ok(ReviewClass::FeatureRequest),
            "irrelevant" => Ok(ReviewClass::Irrelevant),
            other => Err(Error::ProviderUnavailable(format!(
                "classifier returned unknown label `{other}`"
            ))),
        }
    }
}
