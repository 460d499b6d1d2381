//! Tokenization with character spans, alignment between two tokenizations of
//! the same string, and the content-word filter used by the pooling embedder.
//!
//! Offsets are counted in Unicode scalar values of the *normalized* string
//! (NFKC, then lowercase), never in bytes of the original input.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::Result;

const BUNDLED_STOPWORDS: &str = include_str!("../resources/stopwords_en.txt");

/// Identifier of the bundled stopword list; bump when the list changes.
pub const STOPWORD_FILTER_ID: &str = "stopword-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub text: String,
    /// Inclusive start offset (chars).
    pub start: usize,
    /// Exclusive end offset (chars).
    pub end: usize,
}

impl TokenSpan {
    pub fn new(text: impl Into<String>, start: usize, end: usize) -> Self {
        TokenSpan {
            text: text.into(),
            start,
            end,
        }
    }

    pub fn overlaps(&self, other: &TokenSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// NFKC normalization followed by lowercasing.
pub fn normalize(text: &str) -> String {
    text.nfkc().collect::<String>().to_lowercase()
}

/// Splits the normalized text into maximal runs of alphanumeric characters.
pub fn basic_tokenize(text: &str) -> Vec<TokenSpan> {
    tokenize_normalized(&normalize(text))
}

/// Tokenizes text that is already normalized; offsets refer to `normalized`.
pub fn tokenize_normalized(normalized: &str) -> Vec<TokenSpan> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut pos = 0;
    for ch in normalized.chars() {
        if ch.is_alphanumeric() {
            if current.is_empty() {
                start = pos;
            }
            current.push(ch);
        } else if !current.is_empty() {
            tokens.push(TokenSpan::new(std::mem::take(&mut current), start, pos));
        }
        pos += 1;
    }
    if !current.is_empty() {
        tokens.push(TokenSpan::new(current, start, pos));
    }
    tokens
}

/// For each token of sequence A, the sorted positions of the B tokens it
/// overlaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub mapping: Vec<Vec<usize>>,
}

impl AlignmentMap {
    /// The B→A map, given the length of sequence B.
    pub fn inverse(&self, len_b: usize) -> AlignmentMap {
        let mut mapping = vec![Vec::new(); len_b];
        for (i, targets) in self.mapping.iter().enumerate() {
            for &j in targets {
                mapping[j].push(i);
            }
        }
        AlignmentMap { mapping }
    }

    /// Positions in B touched by any of the given A positions, ascending and
    /// deduplicated.
    pub fn project(&self, a_indices: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = a_indices
            .iter()
            .flat_map(|&i| self.mapping[i].iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Aligns two tokenizations of the same string by offset overlap.
///
/// Both inputs must be sorted and non-overlapping within themselves, which
/// lets a single forward sweep replace the all-pairs check.
pub fn align_tokens(a: &[TokenSpan], b: &[TokenSpan]) -> AlignmentMap {
    let mut mapping = Vec::with_capacity(a.len());
    let mut lo = 0;
    for span in a {
        while lo < b.len() && b[lo].end <= span.start {
            lo += 1;
        }
        let mut hits = Vec::new();
        let mut j = lo;
        while j < b.len() && b[j].start < span.end {
            if b[j].overlaps(span) {
                hits.push(j);
            }
            j += 1;
        }
        mapping.push(hits);
    }
    AlignmentMap { mapping }
}

/// A set of function words excluded from content-word selection.
#[derive(Debug, Clone)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// The bundled English list.
    pub fn english() -> Self {
        Stopwords::parse(BUNDLED_STOPWORDS)
    }

    /// Parses the resource format: one token per line, `#` starts a comment.
    pub fn parse(source: &str) -> Self {
        let words = source
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(normalize)
            .collect();
        Stopwords { words }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Stopwords::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::english()
    }
}

fn is_content_token(token: &str, stopwords: &Stopwords) -> bool {
    token.chars().count() >= 2
        && !token.chars().all(char::is_numeric)
        && !stopwords.contains(token)
}

/// Indices of content tokens under the bundled stopword list.
pub fn content_filter(tokens: &[TokenSpan]) -> Vec<usize> {
    content_filter_with(tokens, &Stopwords::english())
}

pub fn content_filter_with(tokens: &[TokenSpan], stopwords: &Stopwords) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| is_content_token(&t.text, stopwords))
        .map(|(i, _)| i)
        .collect()
}

/// Selects the spans of a normalized text whose tokens should contribute to
/// a pooled embedding. Implement this to plug in a real part-of-speech tagger.
pub trait TokenFilter: Send + Sync {
    fn filter_id(&self) -> &str;

    /// Kept spans, with offsets into `normalized`.
    fn kept_spans(&self, normalized: &str) -> Vec<TokenSpan>;
}

/// The default noun approximation: drop stopwords, single characters and
/// pure numbers.
#[derive(Debug, Clone)]
pub struct StopwordFilter {
    id: String,
    stopwords: Stopwords,
}

impl StopwordFilter {
    pub fn new(stopwords: Stopwords) -> Self {
        StopwordFilter {
            id: STOPWORD_FILTER_ID.to_string(),
            stopwords,
        }
    }

    /// A filter with a custom list; `id` must change whenever the list does.
    pub fn with_id(id: impl Into<String>, stopwords: Stopwords) -> Self {
        StopwordFilter {
            id: id.into(),
            stopwords,
        }
    }

    pub fn stopwords(&self) -> &Stopwords {
        &self.stopwords
    }
}

impl Default for StopwordFilter {
    fn default() -> Self {
        StopwordFilter::new(Stopwords::english())
    }
}

impl TokenFilter for StopwordFilter {
    fn filter_id(&self) -> &str {
        &self.id
    }

    fn kept_spans(&self, normalized: &str) -> Vec<TokenSpan> {
        let tokens = tokenize_normalized(normalized);
        content_filter_with(&tokens, &self.stopwords)
            .into_iter()
            .map(|i| tokens[i].clone())
            .collect()
    }
}

/// Keeps every token; pooling with it averages all backend vectors.
#[derive(Debug, Clone, Default)]
pub struct KeepAll;

impl TokenFilter for KeepAll {
    fn filter_id(&self) -> &str {
        "all"
    }

    fn kept_spans(&self, normalized: &str) -> Vec<TokenSpan> {
        tokenize_normalized(normalized)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spans(tokens: &[TokenSpan]) -> Vec<(&str, usize, usize)> {
        tokens.iter().map(|t| (t.text.as_str(), t.start, t.end)).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            spans(&basic_tokenize("Audio cuts off")),
            vec![("audio", 0, 5), ("cuts", 6, 10), ("off", 11, 14)]
        );
        assert!(basic_tokenize("").is_empty());
        assert_eq!(spans(&basic_tokenize("e-mail!!")), vec![("e", 0, 1), ("mail", 2, 6)]);
    }

    #[test]
    fn tokenize_normalizes_compatibility_forms() {
        // Fullwidth letters fold under NFKC; accented letters stay one token.
        assert_eq!(spans(&basic_tokenize("ＡＢＣ olá")), vec![("abc", 0, 3), ("olá", 4, 7)]);
    }

    #[test]
    fn align_examples() {
        let a = vec![TokenSpan::new("new", 0, 3), TokenSpan::new("york", 4, 8)];
        let b = vec![TokenSpan::new("new york", 0, 8)];
        assert_eq!(align_tokens(&a, &b).mapping, vec![vec![0], vec![0]]);

        let same = basic_tokenize("one two three");
        assert_eq!(align_tokens(&same, &same).mapping, vec![vec![0], vec![1], vec![2]]);

        assert_eq!(align_tokens(&[TokenSpan::new("x", 0, 1)], &[]).mapping, vec![Vec::<usize>::new()]);
    }

    #[test]
    fn filter_examples() {
        let toks: Vec<TokenSpan> = ["the", "audio", "keeps", "cutting", "off"]
            .iter()
            .enumerate()
            .map(|(i, w)| TokenSpan::new(*w, i * 10, i * 10 + w.len()))
            .collect();
        assert_eq!(content_filter(&toks), vec![1, 2, 3]);
        assert!(content_filter(&[]).is_empty());
        let toks = vec![TokenSpan::new("a", 0, 1), TokenSpan::new("42", 2, 4)];
        assert!(content_filter(&toks).is_empty());
    }

    #[test]
    fn bundled_list_size_and_comments() {
        let sw = Stopwords::english();
        assert!((170..=200).contains(&sw.len()), "{}", sw.len());
        assert!(sw.contains("would") && sw.contains("they") && sw.contains("the"));
        assert!(!sw.contains("audio") && !sw.contains("keeps"));
        let custom = Stopwords::parse("# header\nfoo\n  bar  # trailing\n\n");
        assert_eq!(custom.len(), 2);
        assert!(custom.contains("bar"));
    }

    #[test]
    fn stopword_filter_spans_refer_to_normalized_text() {
        let f = StopwordFilter::default();
        let kept = f.kept_spans("the audio keeps cutting off");
        assert_eq!(spans(&kept), vec![("audio", 4, 9), ("keeps", 10, 15), ("cutting", 16, 23)]);
    }

    proptest! {
        #[test]
        fn tokenization_round_trips(text in "\\PC{0,40}") {
            let normalized = normalize(&text);
            let chars: Vec<char> = normalized.chars().collect();
            let tokens = tokenize_normalized(&normalized);
            let mut rebuilt = String::new();
            let mut pos = 0;
            for t in &tokens {
                prop_assert!(t.start < t.end);
                prop_assert!(t.start >= pos);
                rebuilt.extend(&chars[pos..t.start]);
                prop_assert_eq!(chars[t.start..t.end].iter().collect::<String>(), t.text.clone());
                rebuilt.push_str(&t.text);
                pos = t.end;
            }
            rebuilt.extend(&chars[pos..]);
            prop_assert_eq!(rebuilt, normalized);
        }

        #[test]
        fn filter_indices_increasing_subset(text in "[a-z0-9 ]{0,60}") {
            let tokens = basic_tokenize(&text);
            let kept = content_filter(&tokens);
            prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(kept.iter().all(|&i| i < tokens.len()));
        }
    }
}
