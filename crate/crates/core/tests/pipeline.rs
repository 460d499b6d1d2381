mod common;

use std::io::Write;

use crowdmatch::corpus::{import_reviews, upsert_embeddings, ImportFormat, RecordKind, Workspace};
use crowdmatch::embed::HashEmbedder;
use crowdmatch::eval::{compare_providers, evaluate, run_experiment, EvalOptions};
use crowdmatch::fixtures::{self, STUDY_GOLD, STUDY_ISSUES, STUDY_REVIEWS, POOLED_PROVIDER, SENTENCE_PROVIDER};
use crowdmatch::matcher::{build_index, MatchOptions, Matcher};
use crowdmatch::model::ReviewClass;
use crowdmatch::Error;

fn study() -> (tempfile::TempDir, Workspace) {
    let dir = tempfile::tempdir().unwrap();
    let ws = fixtures::study_workspace(dir.path()).unwrap();
    (dir, ws)
}

#[test]
fn study_sized_csv_import() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::init(dir.path().join("ws"), None).unwrap();
    let csv_path = dir.path().join("reviews.csv");
    let mut w = csv::Writer::from_path(&csv_path).unwrap();
    w.write_record(["id", "text", "lang", "issue_iid"]).unwrap();
    for (i, r) in fixtures::study_reviews().iter().enumerate() {
        let gold = if i < STUDY_GOLD { fixtures::study_gold_iid(i).to_string() } else { String::new() };
        w.write_record([r.id.as_str(), &r.original_text, "en", &gold]).unwrap();
    }
    w.flush().unwrap();
    let lock = ws.lock().unwrap();
    let report = import_reviews(&ws, &lock, &csv_path, ImportFormat::Csv, "en").unwrap();
    assert_eq!((report.reviews, report.gold_links), (STUDY_REVIEWS, STUDY_GOLD));
    assert_eq!(ws.reviews().unwrap().len(), 69);
    assert_eq!(ws.gold_links().unwrap().len(), 23);
    let again = import_reviews(&ws, &lock, &csv_path, ImportFormat::Csv, "en").unwrap();
    assert_eq!((again.new_reviews, again.new_gold_links), (0, 0));
}

#[test]
fn embedding_574_issues_once() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::init(dir.path(), None).unwrap();
    let lock = ws.lock().unwrap();
    ws.upsert_issues(&lock, fixtures::study_issues()).unwrap();
    let p = HashEmbedder::new(384).unwrap();
    let first = upsert_embeddings(&ws, &lock, &p, RecordKind::Issue).unwrap();
    assert_eq!(first.embedded, STUDY_ISSUES);
    assert_eq!(upsert_embeddings(&ws, &lock, &p, RecordKind::Issue).unwrap().embedded, 0);
    assert!(ws.embeddings("ref-384").unwrap().iter().all(|r| r.dim == 384 && r.values.len() == 384));
    assert_eq!(build_index(&ws, "ref-384").unwrap().len(), 574);
}

#[test]
fn compare_reproduces_the_contrast() {
    let (_d, ws) = study();
    let ids = vec![POOLED_PROVIDER.to_string(), SENTENCE_PROVIDER.to_string()];
    let c = compare_providers(&ws, &ids, &EvalOptions::default()).unwrap();
    assert_eq!(c.reports[0].n_hits, 3);
    assert_eq!(c.reports[1].n_hits, 13);
    assert!(c.reports[1].hit_rate >= c.reports[0].hit_rate);
    assert!((c.deltas[1].hit_rate_delta - 10.0 / 23.0).abs() < 1e-12);
    assert_eq!(c.deltas[0].hit_rate_delta, 0.0);
    let table = c.render_table();
    assert!(table.contains("+43.5pp"), "{table}");

    let same = vec![SENTENCE_PROVIDER.to_string(), SENTENCE_PROVIDER.to_string()];
    let c = compare_providers(&ws, &same, &EvalOptions::default()).unwrap();
    assert!(c.deltas.iter().all(|d| d.hit_rate_delta == 0.0 && d.mrr_delta == 0.0));

    let unknown = vec![SENTENCE_PROVIDER.to_string(), "nope".to_string()];
    assert!(matches!(compare_providers(&ws, &unknown, &EvalOptions::default()), Err(Error::UnknownProvider(_))));
}

#[test]
fn mini_corpus_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let ws = fixtures::mini_workspace(dir.path()).unwrap();
    assert!(matches!(run_experiment(&ws, "ref-384", &EvalOptions::default()), Err(Error::NoEmbeddings(_))));

    fixtures::embed_all(&ws, &HashEmbedder::new(384).unwrap()).unwrap();
    let k5 = run_experiment(&ws, "ref-384", &EvalOptions::default()).unwrap();
    let k1 = run_experiment(&ws, "ref-384", &EvalOptions { k: 1, ..EvalOptions::default() }).unwrap();
    assert_eq!(k5.n_hits, common::mini_oracle_hits(&ws, 5).0);
    assert_eq!(k1.n_hits, common::mini_oracle_hits(&ws, 1).0);
    assert!(k1.hit_rate <= k5.hit_rate);
    assert_eq!(k5.per_review.len(), 6);
}

#[test]
fn class_filter_counts_as_miss() {
    let dir = tempfile::tempdir().unwrap();
    let ws = fixtures::mini_workspace(dir.path()).unwrap();
    fixtures::embed_all(&ws, &HashEmbedder::new(384).unwrap()).unwrap();
    let plain = run_experiment(&ws, "ref-384", &EvalOptions::default()).unwrap();
    let filter = [ReviewClass::FeatureRequest].into_iter().collect();
    let opts = EvalOptions { classify_filter: Some(filter), ..EvalOptions::default() };
    let filtered = run_experiment(&ws, "ref-384", &opts).unwrap();
    assert!(filtered.n_filtered_out > 0);
    assert_eq!(filtered.n_gold, plain.n_gold);
    assert!(filtered.n_hits <= plain.n_hits);
    filtered.check_consistency().unwrap();
}

#[test]
fn match_pipeline_examples() {
    let dir = tempfile::tempdir().unwrap();
    let ws = fixtures::mini_workspace(dir.path()).unwrap();
    fixtures::embed_all(&ws, &HashEmbedder::new(384).unwrap()).unwrap();
    let matcher = Matcher::from_workspace(ws.clone()).unwrap();

    let r = matcher.match_review(&ws.review("r01").unwrap(), &MatchOptions::default()).unwrap();
    assert_eq!(r.candidates.len(), 5);
    assert_eq!(r.review_id.as_deref(), Some("r01"));
    assert!(r.candidates.windows(2).all(|w| w[0].similarity >= w[1].similarity));

    let bugs = MatchOptions {
        classify_filter: Some([ReviewClass::BugReport].into_iter().collect()),
        ..MatchOptions::default()
    };
    let r = matcher.match_text("Love it!!!", "en", &bugs).unwrap();
    assert!(r.filtered_out && r.candidates.is_empty());

    // The index is built once and reused across queries.
    for _ in 0..3 {
        matcher.match_text("audio", "en", &MatchOptions::default()).unwrap();
    }
    assert_eq!(matcher.build_count(), 1);

    let tiny = tempfile::tempdir().unwrap();
    let small = Workspace::init(tiny.path(), None).unwrap();
    let lock = small.lock().unwrap();
    small
        .upsert_issues(&lock, fixtures::mini_issues().into_iter().take(2))
        .unwrap();
    upsert_embeddings(&small, &lock, &HashEmbedder::new(384).unwrap(), RecordKind::Issue).unwrap();
    drop(lock);
    let m = Matcher::from_workspace(small).unwrap();
    let r = m.match_text("audio", "en", &MatchOptions { k: 3, ..MatchOptions::default() }).unwrap();
    assert_eq!(r.candidates.len(), 2);
}

#[test]
fn concurrent_first_queries_build_once() {
    let dir = tempfile::tempdir().unwrap();
    let ws = fixtures::mini_workspace(dir.path()).unwrap();
    fixtures::embed_all(&ws, &HashEmbedder::new(384).unwrap()).unwrap();
    let matcher = Matcher::from_workspace(ws).unwrap();
    let barrier = std::sync::Barrier::new(8);
    let tops: Vec<u64> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..8)
            .map(|_| {
                s.spawn(|| {
                    barrier.wait();
                    let r = matcher.match_text("audio cuts", "en", &MatchOptions::default()).unwrap();
                    r.candidates[0].issue_iid
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(tops.iter().all(|&t| t == tops[0]));
    assert_eq!(matcher.build_count(), 1);
}

#[test]
fn stale_index_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let ws = fixtures::mini_workspace(dir.path()).unwrap();
    fixtures::embed_all(&ws, &HashEmbedder::new(384).unwrap()).unwrap();
    let index = build_index(&ws, "ref-384").unwrap();
    assert!(!index.is_stale(&ws).unwrap());
    let lock = ws.lock().unwrap();
    let mut issue = fixtures::mini_issues().remove(0);
    issue.title = "Audio drops out entirely".into();
    ws.upsert_issues(&lock, [issue]).unwrap();
    upsert_embeddings(&ws, &lock, &HashEmbedder::new(384).unwrap(), RecordKind::Issue).unwrap();
    assert!(index.is_stale(&ws).unwrap());
}

#[test]
fn evaluation_reports_study_figures() {
    let (_d, ws) = study();
    let m = Matcher::from_workspace(ws).unwrap();
    let r = evaluate(&m, SENTENCE_PROVIDER, &EvalOptions::default()).unwrap();
    let mut out = Vec::new();
    writeln!(out, "{}", r.render_table()).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("13/23") || text.contains("13 (56.5%)"), "{text}");
    assert_eq!(r.correct_rank_histogram.get(&1), Some(&13));
}
