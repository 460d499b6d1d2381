//! Translate-then-classify with a recorded translation provider and a
//! persistent cache.

use std::sync::Arc;

use crowdmatch::enrich::{
    classify_review, pipeline_enrich, EnrichOptions, Enricher, RecordedTranslation, RecordedTranslator,
    RuleClassifier, TranslationCache, Translator,
};
use crowdmatch::model::Review;

fn record(q: &str, text: &str) -> RecordedTranslation {
    RecordedTranslation {
        q: q.into(),
        source: "pt".into(),
        target: "en".into(),
        translated_text: text.into(),
    }
}

fn main() -> crowdmatch::Result<()> {
    for text in ["App crashes when I open settings", "Please add dark mode", "Love it!!!"] {
        println!("{:<36} {}", text, classify_review(text)?);
    }

    let dir = tempfile::tempdir()?;
    let cache = TranslationCache::open(dir.path().join("translations.jsonl"))?;
    let adapter = RecordedTranslator::new(
        "recorded",
        [
            record("O áudio fica cortando", "The audio keeps cutting off"),
            record("Por favor adicionem modo escuro", "Please add dark mode"),
        ],
    );
    let translator = Arc::new(Translator::new(Arc::new(adapter), cache));
    let enricher = Enricher::new(Some(translator.clone()), Arc::new(RuleClassifier::default()));
    let opts = EnrichOptions {
        target: Some("en".into()),
        classify: true,
    };

    for (id, text) in [("r1", "O áudio fica cortando"), ("r2", "Por favor adicionem modo escuro")] {
        let review = pipeline_enrich(&enricher, &Review::new(id, text, "pt")?, &opts)?;
        println!(
            "{id}: {:?} -> {:?} [{}]",
            review.original_text,
            review.translated_text.as_deref().unwrap_or(""),
            review.label.map(|l| l.to_string()).unwrap_or_default()
        );
    }
    println!("cached translations: {}", translator.cache().len());
    Ok(())
}
