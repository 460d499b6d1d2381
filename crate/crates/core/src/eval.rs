//! hit@k, rank statistics and MRR against gold links.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{write_atomic, GoldLink, Workspace, WriteLock};
use crate::error::{Error, Result};
use crate::matcher::{check_knobs, MatchOptions, MatchResult, Matcher, Stage, DEFAULT_TOP_K};
use crate::model::{percent, ReviewClass};

/// Outcome of one gold-linked review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewOutcome {
    pub review_id: String,
    pub gold_iid: u64,
    /// 1-based rank of the gold issue, when within the first k candidates.
    pub rank_found: Option<usize>,
    pub similarity: Option<f64>,
    /// The class filter removed the review; counted as a miss.
    #[serde(default)]
    pub filtered_out: bool,
    /// The query could not be embedded; excluded from all rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provider_id: String,
    pub k: usize,
    pub threshold: Option<f64>,
    /// Gold reviews that entered the rates (excludes embedding failures).
    pub n_gold: usize,
    pub n_hits: usize,
    pub hit_rate: f64,
    pub mrr: f64,
    pub correct_rank_histogram: BTreeMap<usize, usize>,
    pub mean_similarity_of_correct: Option<f64>,
    pub n_filtered_out: usize,
    pub n_failed: usize,
    pub per_review: Vec<ReviewOutcome>,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankStats {
    pub histogram: BTreeMap<usize, usize>,
    pub mean_similarity_of_correct: Option<f64>,
    pub mrr: f64,
}

fn hit_of(gold: &GoldLink, results: &BTreeMap<String, MatchResult>, k: usize) -> Result<Option<(usize, f64)>> {
    let result = results
        .get(&gold.review_id)
        .ok_or_else(|| Error::MissingResult(gold.review_id.clone()))?;
    Ok(result
        .candidates
        .iter()
        .take(k)
        .enumerate()
        .find(|(_, c)| c.issue_iid == gold.issue_iid)
        .map(|(i, c)| (i + 1, c.similarity)))
}

fn check_gold(gold: &[GoldLink], k: usize) -> Result<()> {
    if gold.is_empty() {
        return Err(Error::EmptyGoldSet);
    }
    check_knobs(k, None)
}

/// Number of gold reviews whose issue is among the first `k` candidates,
/// and that number over `gold.len()`.
pub fn hit_at_k(gold: &[GoldLink], results: &BTreeMap<String, MatchResult>, k: usize) -> Result<(usize, f64)> {
    check_gold(gold, k)?;
    let mut hits = 0;
    for g in gold {
        if hit_of(g, results, k)?.is_some() {
            hits += 1;
        }
    }
    Ok((hits, hits as f64 / gold.len() as f64))
}

/// Histogram of hit ranks, mean similarity at the hits, and MRR.
pub fn rank_stats(gold: &[GoldLink], results: &BTreeMap<String, MatchResult>, k: usize) -> Result<RankStats> {
    check_gold(gold, k)?;
    let mut histogram = BTreeMap::new();
    let mut sims = Vec::new();
    let mut reciprocal = 0.0;
    for g in gold {
        if let Some((rank, sim)) = hit_of(g, results, k)? {
            *histogram.entry(rank).or_insert(0) += 1;
            sims.push(sim);
            reciprocal += 1.0 / rank as f64;
        }
    }
    let mean_similarity_of_correct = if sims.is_empty() {
        None
    } else {
        Some(sims.iter().sum::<f64>() / sims.len() as f64)
    };
    Ok(RankStats {
        histogram,
        mean_similarity_of_correct,
        mrr: reciprocal / gold.len() as f64,
    })
}

impl EvalReport {
    /// Builds a report from per-review results. `failed` lists gold reviews
    /// whose query could not be embedded, with the error message.
    pub fn from_results(
        provider_id: &str,
        k: usize,
        threshold: Option<f64>,
        gold: &[GoldLink],
        results: &BTreeMap<String, MatchResult>,
        failed: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let scored: Vec<GoldLink> = gold
            .iter()
            .filter(|g| !failed.contains_key(&g.review_id))
            .cloned()
            .collect();
        let (n_hits, hit_rate) = hit_at_k(&scored, results, k)?;
        let stats = rank_stats(&scored, results, k)?;
        let mut per_review = Vec::with_capacity(gold.len());
        for g in gold {
            let outcome = match failed.get(&g.review_id) {
                Some(e) => ReviewOutcome {
                    review_id: g.review_id.clone(),
                    gold_iid: g.issue_iid,
                    rank_found: None,
                    similarity: None,
                    filtered_out: false,
                    error: Some(e.clone()),
                },
                None => {
                    let hit = hit_of(g, results, k)?;
                    ReviewOutcome {
                        review_id: g.review_id.clone(),
                        gold_iid: g.issue_iid,
                        rank_found: hit.map(|h| h.0),
                        similarity: hit.map(|h| h.1),
                        filtered_out: results[&g.review_id].filtered_out,
                        error: None,
                    }
                }
            };
            per_review.push(outcome);
        }
        per_review.sort_by(|a, b| a.review_id.cmp(&b.review_id));
        let report = EvalReport {
            provider_id: provider_id.to_string(),
            k,
            threshold,
            n_gold: scored.len(),
            n_hits,
            hit_rate,
            mrr: stats.mrr,
            correct_rank_histogram: stats.histogram,
            mean_similarity_of_correct: stats.mean_similarity_of_correct,
            n_filtered_out: per_review.iter().filter(|o| o.filtered_out).count(),
            n_failed: failed.len(),
            per_review,
            generated_at: Utc::now(),
        };
        report.check_consistency()?;
        Ok(report)
    }

    /// Recounts every aggregate from `per_review`.
    pub fn check_consistency(&self) -> Result<()> {
        let scored: Vec<_> = self.per_review.iter().filter(|o| o.error.is_none()).collect();
        let hits: Vec<_> = scored.iter().filter(|o| o.rank_found.is_some()).collect();
        let mut histogram = BTreeMap::new();
        for o in &hits {
            *histogram.entry(o.rank_found.unwrap_or(0)).or_insert(0usize) += 1;
        }
        let problems = [
            (scored.len() != self.n_gold, "n_gold"),
            (hits.len() != self.n_hits, "n_hits"),
            (self.n_hits > self.n_gold, "n_hits > n_gold"),
            (self.n_gold > 0 && self.hit_rate != self.n_hits as f64 / self.n_gold as f64, "hit_rate"),
            (histogram != self.correct_rank_histogram, "histogram"),
            (histogram.keys().any(|&r| r == 0 || r > self.k), "rank outside 1..=k"),
            (self.mrr > self.hit_rate + 1e-12, "mrr > hit_rate"),
        ];
        match problems.iter().find(|p| p.0) {
            Some((_, what)) => Err(Error::Inconsistent(format!("report {what} does not match per-review outcomes"))),
            None => Ok(()),
        }
    }

    /// `hit_rate` in display form, e.g. `56.5`.
    pub fn hit_rate_percent(&self) -> f64 {
        percent(self.hit_rate)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "provider        {}", self.provider_id);
        let _ = writeln!(out, "k               {}", self.k);
        if let Some(t) = self.threshold {
            let _ = writeln!(out, "threshold       {t}");
        }
        let _ = writeln!(out, "gold reviews    {}", self.n_gold);
        let _ = writeln!(out, "hits            {} ({:.1}%)", self.n_hits, self.hit_rate_percent());
        let _ = writeln!(out, "mrr             {:.3}", self.mrr);
        match self.mean_similarity_of_correct {
            Some(m) => {
                let _ = writeln!(out, "mean similarity {:.1}%", percent(m));
            }
            None => {
                let _ = writeln!(out, "mean similarity n/a");
            }
        }
        if self.n_filtered_out > 0 {
            let _ = writeln!(out, "filtered out    {} (counted as misses)", self.n_filtered_out);
        }
        if self.n_failed > 0 {
            let _ = writeln!(out, "FAILED          {} (excluded from rates)", self.n_failed);
        }
        let _ = writeln!(out, "rank histogram");
        for (rank, count) in &self.correct_rank_histogram {
            let _ = writeln!(out, "  rank {rank:<3} {count}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<24} {:>6} {:>5} {:>8}", "review", "gold", "rank", "sim");
        for o in &self.per_review {
            let rank = match (&o.error, o.rank_found, o.filtered_out) {
                (Some(_), _, _) => "err".to_string(),
                (_, Some(r), _) => r.to_string(),
                (_, None, true) => "filt".to_string(),
                _ => "-".to_string(),
            };
            let sim = o.similarity.map(|s| format!("{:.1}%", percent(s))).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{:<24} {:>6} {:>5} {:>8}", o.review_id, o.gold_iid, rank, sim);
        }
        for o in self.per_review.iter().filter(|o| o.error.is_some()) {
            let _ = writeln!(out, "error {}: {}", o.review_id, o.error.as_deref().unwrap_or(""));
        }
        out
    }
}

/// Knobs of an evaluation run; the provider is passed separately.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    pub threshold: Option<f64>,
    pub translate_to: Option<String>,
    pub classify_filter: Option<BTreeSet<ReviewClass>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k: DEFAULT_TOP_K,
            threshold: None,
            translate_to: None,
            classify_filter: None,
        }
    }
}

impl EvalOptions {
    pub fn match_options(&self, provider_id: &str) -> MatchOptions {
        MatchOptions {
            provider: provider_id.to_string(),
            k: self.k,
            threshold: self.threshold,
            translate_to: self.translate_to.clone(),
            classify_filter: self.classify_filter.clone(),
            classify: false,
        }
    }
}

/// Runs every gold-linked review through the matcher, in review-id order.
pub fn evaluate(matcher: &Matcher, provider_id: &str, opts: &EvalOptions) -> Result<EvalReport> {
    let mopts = opts.match_options(provider_id);
    check_knobs(mopts.k, mopts.threshold)?;
    matcher.index(provider_id)?;
    let ws = matcher.workspace();
    let gold = ws.gold_links()?;
    if gold.is_empty() {
        return Err(Error::EmptyGoldSet);
    }
    let reviews = ws.review_map()?;
    let mut results = BTreeMap::new();
    let mut failed = BTreeMap::new();
    for g in &gold {
        let review = reviews
            .get(&g.review_id)
            .ok_or_else(|| Error::UnknownReview(g.review_id.clone()))?;
        match matcher.match_review_staged(review, &mopts) {
            Ok(r) => {
                results.insert(g.review_id.clone(), r);
            }
            Err(Stage::Embed(e)) => {
                log::warn!("review {} could not be embedded: {e}", g.review_id);
                failed.insert(g.review_id.clone(), e.to_string());
            }
            Err(Stage::Other(e)) => return Err(e),
        }
    }
    EvalReport::from_results(provider_id, opts.k, opts.threshold, &gold, &results, &failed)
}

/// [`evaluate`] with the providers and adapters configured in `ws`.
pub fn run_experiment(ws: &Workspace, provider_id: &str, opts: &EvalOptions) -> Result<EvalReport> {
    let matcher = Matcher::from_workspace(ws.clone())?;
    evaluate(&matcher, provider_id, opts)
}

/// Stores `report` as the workspace's most recent evaluation.
pub fn save_report(ws: &Workspace, _lock: &WriteLock, report: &EvalReport) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    write_atomic(&ws.last_report_path(), &bytes)
}

pub fn load_last_report(ws: &Workspace) -> Result<Option<EvalReport>> {
    let path = ws.last_report_path();
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_slice(&std::fs::read(path)?)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderDelta {
    pub provider_id: String,
    /// Difference to the first provider's hit rate.
    pub hit_rate_delta: f64,
    pub mrr_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<EvalReport>,
    pub deltas: Vec<ProviderDelta>,
}

impl Comparison {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<32} {:>5} {:>6} {:>8} {:>7} {:>10}", "provider", "gold", "hits", "hit@k", "mrr", "delta");
        for (r, d) in self.reports.iter().zip(&self.deltas) {
            let _ = writeln!(
                out,
                "{:<32} {:>5} {:>6} {:>7.1}% {:>7.3} {:>+9.1}pp",
                r.provider_id,
                r.n_gold,
                r.n_hits,
                r.hit_rate_percent(),
                r.mrr,
                percent(d.hit_rate_delta)
            );
        }
        out
    }
}

/// One report per provider and hit-rate deltas against the first one.
pub fn compare_with(matcher: &Matcher, provider_ids: &[String], opts: &EvalOptions) -> Result<Comparison> {
    if provider_ids.len() < 2 {
        return Err(Error::InvalidArgument("compare needs at least two providers".into()));
    }
    for id in provider_ids {
        matcher.registry().get(id)?;
    }
    let reports = provider_ids
        .iter()
        .map(|id| evaluate(matcher, id, opts))
        .collect::<Result<Vec<_>>>()?;
    let base = &reports[0];
    let deltas = reports
        .iter()
        .map(|r| ProviderDelta {
            provider_id: r.provider_id.clone(),
            hit_rate_delta: r.hit_rate - base.hit_rate,
            mrr_delta: r.mrr - base.mrr,
        })
        .collect();
    Ok(Comparison { reports, deltas })
}

pub fn compare_providers(ws: &Workspace, provider_ids: &[String], opts: &EvalOptions) -> Result<Comparison> {
    let matcher = Matcher::from_workspace(ws.clone())?;
    compare_with(&matcher, provider_ids, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LinkOrigin;
    use crate::model::MatchCandidate;

    fn gold(id: &str, iid: u64) -> GoldLink {
        GoldLink {
            review_id: id.into(),
            issue_iid: iid,
            origin: LinkOrigin::Imported,
            decided_at: Utc::now(),
        }
    }

    fn result(cands: &[(u64, f64)]) -> MatchResult {
        MatchResult {
            review_id: None,
            query_text: None,
            provider_id: "p".into(),
            candidates: cands
                .iter()
                .enumerate()
                .map(|(i, &(iid, similarity))| MatchCandidate {
                    issue_iid: iid,
                    similarity,
                    rank: i + 1,
                })
                .collect(),
            threshold_applied: None,
            k_requested: 5,
            filtered_out: false,
            translated_text: None,
            label: None,
        }
    }

    #[test]
    fn single_gold_cases() {
        let g = vec![gold("a", 7)];
        let mut results = BTreeMap::new();
        results.insert("a".to_string(), result(&[(7, 0.9), (1, 0.5)]));
        let s = rank_stats(&g, &results, 5).unwrap();
        assert_eq!(s.mrr, 1.0);
        results.insert("a".to_string(), result(&[(1, 0.9)]));
        let s = rank_stats(&g, &results, 5).unwrap();
        assert_eq!(s.mrr, 0.0);
        assert!(s.histogram.is_empty());
        assert_eq!(s.mean_similarity_of_correct, None);
    }

    #[test]
    fn hit_only_within_k() {
        let g = vec![gold("a", 3)];
        let mut results = BTreeMap::new();
        results.insert("a".to_string(), result(&[(1, 0.9), (2, 0.8), (3, 0.7)]));
        assert_eq!(hit_at_k(&g, &results, 2).unwrap(), (0, 0.0));
        assert_eq!(hit_at_k(&g, &results, 3).unwrap(), (1, 1.0));
    }

    #[test]
    fn errors() {
        let results = BTreeMap::new();
        assert!(matches!(hit_at_k(&[], &results, 5), Err(Error::EmptyGoldSet)));
        assert!(matches!(hit_at_k(&[gold("x", 1)], &results, 5), Err(Error::MissingResult(id)) if id == "x"));
        assert!(matches!(rank_stats(&[gold("x", 1)], &results, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn report_round_trips_and_checks() {
        let g = vec![gold("a", 1), gold("b", 2), gold("c", 3)];
        let mut results = BTreeMap::new();
        results.insert("a".to_string(), result(&[(1, 0.9)]));
        results.insert("b".to_string(), result(&[(5, 0.9), (2, 0.4)]));
        let mut failed = BTreeMap::new();
        failed.insert("c".to_string(), "empty text".to_string());
        let report = EvalReport::from_results("p", 5, None, &g, &results, &failed).unwrap();
        assert_eq!((report.n_gold, report.n_hits, report.n_failed), (2, 2, 1));
        assert_eq!(report.mrr, 0.75);
        let json = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);

        let mut broken = report.clone();
        broken.n_hits = 1;
        assert!(matches!(broken.check_consistency(), Err(Error::Inconsistent(_))));
        assert!(report.render_table().contains("FAILED"));
    }
}
