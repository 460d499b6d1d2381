//! Top-k issue suggestions for reviews on the shipped mini corpus.
//!
//!     cargo run --example match_reviews -- "video freezes when casting"

use crowdmatch::embed::HashEmbedder;
use crowdmatch::fixtures;
use crowdmatch::matcher::{MatchOptions, Matcher};
use crowdmatch::model::ReviewClass;
use crowdmatch::view::MatchResponse;

fn main() -> crowdmatch::Result<()> {
    let dir = tempfile::tempdir()?;
    let ws = fixtures::mini_workspace(dir.path())?;
    fixtures::embed_all(&ws, &HashEmbedder::new(384)?)?;
    let matcher = Matcher::from_workspace(ws)?;
    let issues = matcher.workspace().issue_map()?;

    let mut queries: Vec<String> = std::env::args().skip(1).collect();
    if queries.is_empty() {
        queries = vec!["The audio keeps cutting off".into(), "Please add a dark theme".into()];
    }
    let opts = MatchOptions { k: 3, ..MatchOptions::default() };
    for q in &queries {
        let result = matcher.match_text(q, "en", &opts)?;
        println!("> {q}");
        print!("{}", MatchResponse::from_result(&result, &issues).render_table());
    }

    // Only bug reports get suggestions with a class filter.
    let bugs = MatchOptions {
        classify_filter: Some([ReviewClass::BugReport].into_iter().collect()),
        ..opts
    };
    let praise = matcher.match_text("Love it!!!", "en", &bugs)?;
    println!("> Love it!!!  (filtered out: {})", praise.filtered_out);
    Ok(())
}
