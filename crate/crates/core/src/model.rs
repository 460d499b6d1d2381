//! Domain types shared by every stage of the pipeline, plus the vector math
//! the matcher and the pooling embedder rely on.
//!
//! All arithmetic runs in `f64` and sums in index order, so similarity
//! values (and therefore ranks) are bit-stable across runs and platforms.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One unit of end-user feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub original_text: String,
    pub original_lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translated_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ReviewClass>,
    #[serde(default)]
    pub source: String,
    pub created_at: DateTime<Utc>,
}

impl Review {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        lang: impl Into<String>,
    ) -> Result<Self> {
        let review = Review {
            id: id.into(),
            original_text: text.into(),
            original_lang: lang.into(),
            translated_text: None,
            label: None,
            source: String::new(),
            created_at: Utc::now(),
        };
        review.validate()?;
        Ok(review)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidArgument("review id is empty".into()));
        }
        if self.original_text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        if matches!(&self.translated_text, Some(t) if t.trim().is_empty()) {
            return Err(Error::InvalidArgument(format!(
                "review `{}` has an empty translation",
                self.id
            )));
        }
        Ok(())
    }

    /// The text that gets embedded: the translation when present.
    pub fn embed_text(&self) -> &str {
        self.translated_text.as_deref().unwrap_or(&self.original_text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssueState {
    #[serde(alias = "opened")]
    Open,
    Closed,
}

/// One issue-tracker entry. Only the title is ever embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub iid: u64,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_translated: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub labels: Vec<String>,
    pub state: IssueState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl Issue {
    pub fn new(iid: u64, title: impl Into<String>) -> Result<Self> {
        let issue = Issue {
            iid,
            title: title.into(),
            title_translated: None,
            description: None,
            labels: Vec::new(),
            state: IssueState::Open,
            url: None,
            created_at: Utc::now(),
        };
        issue.validate()?;
        Ok(issue)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iid == 0 {
            return Err(Error::InvalidArgument("issue iid must be positive".into()));
        }
        if self.title.trim().is_empty() {
            return Err(Error::InvalidArgument(format!(
                "issue #{} has an empty title",
                self.iid
            )));
        }
        Ok(())
    }

    pub fn embed_text(&self) -> &str {
        self.title_translated.as_deref().unwrap_or(&self.title)
    }
}

/// The three feedback classes used to filter reviews before matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewClass {
    Irrelevant,
    FeatureRequest,
    BugReport,
}

impl ReviewClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewClass::Irrelevant => "irrelevant",
            ReviewClass::FeatureRequest => "feature_request",
            ReviewClass::BugReport => "bug_report",
        }
    }
}

impl fmt::Display for ReviewClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReviewClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "irrelevant" => Ok(ReviewClass::Irrelevant),
            "feature" | "feature_request" | "featurerequest" => Ok(ReviewClass::FeatureRequest),
            "bug" | "bug_report" | "bugreport" => Ok(ReviewClass::BugReport),
            other => Err(Error::InvalidArgument(format!("unknown review class `{other}`"))),
        }
    }
}

/// A real vector tagged with the identity of the provider that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector", into = "RawVector")]
pub struct EmbeddingVector {
    provider_id: String,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawVector {
    provider_id: String,
    dim: usize,
    values: Vec<f64>,
}

impl TryFrom<RawVector> for EmbeddingVector {
    type Error = Error;

    fn try_from(raw: RawVector) -> Result<Self> {
        if raw.values.len() != raw.dim {
            return Err(Error::DimensionMismatch {
                expected: raw.dim,
                actual: raw.values.len(),
            });
        }
        EmbeddingVector::new(raw.provider_id, raw.values)
    }
}

impl From<EmbeddingVector> for RawVector {
    fn from(v: EmbeddingVector) -> Self {
        RawVector {
            dim: v.values.len(),
            provider_id: v.provider_id,
            values: v.values,
        }
    }
}

impl EmbeddingVector {
    pub fn new(provider_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(EmbeddingVector {
            provider_id: provider_id.into(),
            values,
        })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same values under a different provider id.
    pub fn retag(self, provider_id: impl Into<String>) -> Self {
        EmbeddingVector {
            provider_id: provider_id.into(),
            values: self.values,
        }
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    /// Multiply every component by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        EmbeddingVector::new(
            self.provider_id.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }
}

/// A ranked suggestion of one issue for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub issue_iid: u64,
    pub similarity: f64,
    pub rank: usize,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_compatible(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if a.provider_id != b.provider_id {
        return Err(Error::ProviderMismatch {
            expected: a.provider_id.clone(),
            actual: b.provider_id.clone(),
        });
    }
    Ok(())
}

/// `dot(a, b) / (‖a‖ ‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_compatible(a, b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(&a.values, &b.values) / (na * nb)).clamp(-1.0, 1.0))
}

pub(crate) fn normalize_values(values: &[f64]) -> Result<Vec<f64>> {
    let n = norm(values);
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(values.iter().map(|v| v / n).collect())
}

pub fn l2_normalize(v: &EmbeddingVector) -> Result<EmbeddingVector> {
    Ok(EmbeddingVector {
        provider_id: v.provider_id.clone(),
        values: normalize_values(&v.values)?,
    })
}

/// Component-wise arithmetic mean.
pub fn mean_pool(vectors: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let first = vectors.first().ok_or(Error::EmptyInput)?;
    let mut sum = vec![0.0; first.dim()];
    for v in vectors {
        check_compatible(first, v)?;
        for (acc, x) in sum.iter_mut().zip(&v.values) {
            *acc += x;
        }
    }
    let n = vectors.len() as f64;
    EmbeddingVector::new(first.provider_id.clone(), sum.into_iter().map(|s| s / n).collect())
}

/// Display form of a similarity: `cosine × 100`, rounded half-up to one decimal.
pub fn percent(similarity: f64) -> f64 {
    round_half_up_1(similarity * 100.0)
}

pub(crate) fn round_half_up_1(x: f64) -> f64 {
    // Round on the decimal representation so values such as 56.25 are not
    // pushed down by binary representation error.
    let repr = format!("{:.9}", x * 10.0);
    let scaled: f64 = repr.parse().unwrap_or(x * 10.0);
    (scaled + 0.5).floor() / 10.0
}
