//! Review enrichment: translation into the working language, then
//! classification of the translated text.

mod classify;
mod translate;

use std::sync::Arc;

pub use classify::{classify_review, ClassifierRule, HttpClassifier, ReviewClassifier, RuleClassifier};
pub use translate::{
    translate, validate_lang_tag, HttpTranslator, OfflineTranslator, RecordedTranslation,
    RecordedTranslator, TranslationAdapter, TranslationCache, TranslationRecord, Translator,
    DEFAULT_MAX_IN_FLIGHT,
};

use crate::error::{Error, Result};
use crate::model::Review;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnrichOptions {
    /// Translate into this language; `None` leaves `translated_text` alone.
    pub target: Option<String>,
    pub classify: bool,
}

/// Translator (optional) plus classifier.
#[derive(Clone)]
pub struct Enricher {
    translator: Option<Arc<Translator>>,
    classifier: Arc<dyn ReviewClassifier>,
}

impl Default for Enricher {
    fn default() -> Self {
        Enricher {
            translator: None,
            classifier: Arc::new(RuleClassifier::default()),
        }
    }
}

impl Enricher {
    pub fn new(translator: Option<Arc<Translator>>, classifier: Arc<dyn ReviewClassifier>) -> Self {
        Enricher { translator, classifier }
    }

    pub fn with_translator(mut self, translator: Arc<Translator>) -> Self {
        self.translator = Some(translator);
        self
    }

    pub fn translator(&self) -> Option<&Translator> {
        self.translator.as_deref()
    }

    pub fn classifier(&self) -> &dyn ReviewClassifier {
        self.classifier.as_ref()
    }

    pub fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        match &self.translator {
            Some(t) => t.translate(text, source, target),
            None if source.eq_ignore_ascii_case(target) => {
                validate_lang_tag(target)?;
                Ok(text.to_string())
            }
            None => Err(Error::ProviderUnavailable("no translator configured".into())),
        }
    }

    /// Fills `translated_text` (from the original text, so reruns are
    /// idempotent) and then `label`, classified on the translated text.
    pub fn enrich(&self, review: &Review, opts: &EnrichOptions) -> Result<Review> {
        review.validate()?;
        let mut out = review.clone();
        if let Some(target) = &opts.target {
            out.translated_text =
                Some(self.translate(&review.original_text, &review.original_lang, target)?);
        }
        if opts.classify {
            out.label = Some(self.classifier.classify(out.embed_text())?);
        }
        Ok(out)
    }
}

/// Translate-then-classify for one review.
pub fn pipeline_enrich(enricher: &Enricher, review: &Review, opts: &EnrichOptions) -> Result<Review> {
    enricher.enrich(review, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ReviewClass;

    fn enricher() -> Enricher {
        let adapter = RecordedTranslator::new(
            "rec",
            vec![RecordedTranslation {
                q: "O aplicativo trava ao abrir".into(),
                source: "pt".into(),
                target: "en".into(),
                translated_text: "The app crashes when opening".into(),
            }],
        );
        Enricher::default().with_translator(Arc::new(Translator::new(
            Arc::new(adapter),
            TranslationCache::in_memory(),
        )))
    }

    #[test]
    fn translate_then_classify() {
        let r = Review::new("r1", "O aplicativo trava ao abrir", "pt").unwrap();
        let opts = EnrichOptions { target: Some("en".into()), classify: true };
        let out = pipeline_enrich(&enricher(), &r, &opts).unwrap();
        assert_eq!(out.translated_text.as_deref(), Some("The app crashes when opening"));
        // "trava" is not an English keyword; the label comes from the translation.
        assert_eq!(out.label, Some(ReviewClass::BugReport));
    }

    #[test]
    fn english_review_keeps_text() {
        let r = Review::new("r2", "Please add tabs", "en").unwrap();
        let out = Enricher::default()
            .enrich(&r, &EnrichOptions { target: Some("en".into()), classify: false })
            .unwrap();
        assert_eq!(out.translated_text.as_deref(), Some("Please add tabs"));
        assert_eq!(out.label, None);
    }

    #[test]
    fn idempotent() {
        let e = enricher();
        let r = Review::new("r1", "O aplicativo trava ao abrir", "pt").unwrap();
        let opts = EnrichOptions { target: Some("en".into()), classify: true };
        let once = e.enrich(&r, &opts).unwrap();
        let twice = e.enrich(&once, &opts).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn missing_translator() {
        let r = Review::new("r1", "olá", "pt").unwrap();
        let err = Enricher::default()
            .enrich(&r, &EnrichOptions { target: Some("en".into()), classify: false })
            .unwrap_err();
        assert!(matches!(err, Error::ProviderUnavailable(_)));
    }
}
