use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{GoldLink, LinkOrigin, LinkRecord, Workspace, WriteLock};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Decision {
    Linked { issue_iid: u64 },
    #[serde(rename = "new_issue")]
    NewIssueNeeded,
    Dismissed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageDecision {
    pub review_id: String,
    pub decision: Decision,
    pub decided_by: String,
    pub decided_at: DateTime<Utc>,
}

/// Appends a triage decision. A `Linked` decision also creates a gold link
/// (origin `triage`) unless the review already has one.
pub fn record_triage(ws: &Workspace, lock: &WriteLock, decision: TriageDecision) -> Result<TriageDecision> {
    if !ws.review_map()?.contains_key(&decision.review_id) {
        return Err(Error::UnknownReview(decision.review_id));
    }
    let mut records = vec![LinkRecord::Triage(decision.clone())];
    if let Decision::Linked { issue_iid } = decision.decision {
        if !ws.issue_map()?.contains_key(&issue_iid) {
            return Err(Error::UnknownIssue(issue_iid));
        }
        let has_gold = ws
            .gold_links()?
            .iter()
            .any(|g| g.review_id == decision.review_id);
        if !has_gold {
            records.push(LinkRecord::GoldLink(GoldLink {
                review_id: decision.review_id.clone(),
                issue_iid,
                origin: LinkOrigin::Triage,
                decided_at: decision.decided_at,
            }));
        }
    }
    ws.append_links(lock, &records)?;
    Ok(decision)
}
