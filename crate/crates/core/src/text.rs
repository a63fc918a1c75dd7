//! Tokenization shared by the lexicon scorer and lexical retrieval.

use std::collections::BTreeSet;

/// Lowercased word tokens. Curly apostrophes are folded to `'` so that
/// "won’t" and "won't" tokenize identically.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        let ch = if ch == '\u{2019}' || ch == '\u{2018}' {
            '\''
        } else {
            ch
        };
        if ch.is_alphanumeric() || ch == '\'' {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            push_token(&mut out, &mut cur);
        }
    }
    if !cur.is_empty() {
        push_token(&mut out, &mut cur);
    }
    out
}

fn push_token(out: &mut Vec<String>, cur: &mut String) {
    let trimmed = cur.trim_matches('\'');
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
    cur.clear();
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "been", "before", "being", "but", "by", "can", "could", "did", "do", "does", "doing", "for",
    "from", "had", "has", "have", "he", "her", "here", "hers", "him", "his", "how", "i", "i'll",
    "i'm", "if", "in", "into", "is", "it", "it's", "its", "just", "me", "my", "no", "not", "now",
    "of", "off", "ok", "on", "or", "our", "out", "over", "she", "so", "some", "such", "than",
    "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "to", "too",
    "up", "us", "very", "was", "we", "were", "what", "when", "where", "which", "who", "why",
    "will", "with", "won't", "would", "you", "you'll", "your",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Distinct non-stopword tokens.
pub fn content_words(text: &str) -> BTreeSet<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .collect()
}

/// Fraction of the query's content words that also occur in `doc`.
/// Returns 0 when the query has no content words.
pub fn lexical_overlap(query: &str, doc: &str) -> f64 {
    let q = content_words(query);
    if q.is_empty() {
        return 0.0;
    }
    let d = content_words(doc);
    let shared = q.iter().filter(|w| d.contains(*w)).count();
    shared as f64 / q.len() as f64
}

/// Case-insensitive substring test used by the mock rule predicates.
pub fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack
        .to_lowercase()
        .replace('\u{2019}', "'")
        .contains(&needle.to_lowercase())
}
