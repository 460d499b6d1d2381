//! hit@5, MRR and rank statistics against gold links, and a comparison of
//! two providers on the recorded study-sized corpus (574 issues, 69
//! reviews, 23 gold links).

use crowdmatch::eval::{compare_with, evaluate, EvalOptions};
use crowdmatch::fixtures::{self, POOLED_PROVIDER, SENTENCE_PROVIDER};
use crowdmatch::matcher::Matcher;

fn main() -> crowdmatch::Result<()> {
    let dir = tempfile::tempdir()?;
    let ws = fixtures::study_workspace(dir.path())?;
    let matcher = Matcher::from_workspace(ws)?;
    let opts = EvalOptions::default();

    let pooled = evaluate(&matcher, POOLED_PROVIDER, &opts)?;
    print!("{}", pooled.render_table());
    println!("rank histogram {:?}", pooled.correct_rank_histogram);
    println!();

    let ids = [POOLED_PROVIDER.to_string(), SENTENCE_PROVIDER.to_string()];
    print!("{}", compare_with(&matcher, &ids, &opts)?.render_table());
    Ok(())
}
