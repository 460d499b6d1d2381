//! Issue collection against recorded tracker pages (with an interrupted
//! run that resumes) and review import from CSV.
//!
//! Point `IssueCollector` at `UreqTransport` and a real tracker URL to
//! fetch a live project instead.

use std::sync::Arc;

use crowdmatch::corpus::{
    collect_issues, import_reviews, CollectorConfig, FixtureTransport, ImportFormat, IssueCollector, Workspace,
};
use crowdmatch::fixtures;

fn main() -> crowdmatch::Result<()> {
    let dir = tempfile::tempdir()?;
    let ws = Workspace::init(dir.path(), Some("demo/app".into()))?;

    let transport = Arc::new(FixtureTransport::new());
    let collector = IssueCollector::new(transport.clone(), "https://gitlab.example.com", CollectorConfig::default());
    fixtures::record_tracker_pages(&transport, &collector, "demo/app", &fixtures::study_issues());
    transport.fail(collector.page_url("demo/app", 3), 1);

    let lock = ws.lock()?;
    match collect_issues(&ws, &lock, &collector, "demo/app", None, None) {
        Ok(_) => unreachable!("page 3 is set to fail"),
        Err(e) => println!("first run stopped: {e} ({} issues kept)", ws.issues()?.len()),
    }
    let report = collect_issues(&ws, &lock, &collector, "demo/app", None, None)?;
    println!(
        "resumed at page {}: {} pages, {} issues stored",
        report.resumed_from.unwrap_or(1),
        report.pages_fetched,
        report.stored_total
    );

    let csv = dir.path().join("reviews.csv");
    std::fs::write(&csv, fixtures::MINI_REVIEWS_CSV)?;
    let imported = import_reviews(&ws, &lock, &csv, ImportFormat::Csv, "en")?;
    println!("imported {} reviews, {} gold links", imported.reviews, imported.gold_links);
    println!("workspace files in {}", ws.root().display());
    Ok(())
}
