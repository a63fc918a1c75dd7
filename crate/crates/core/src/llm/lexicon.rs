//! Sentiment lexicon used by the mock backend and by literal (emotion-off)
//! appraisal.
//!
//! Entries are single words or multi-word phrases with a signed weight. A
//! text scores as the mean weight of its matches; matching is greedy
//! longest-phrase-first over the token stream, so "dry and flat" consumes
//! its tokens before any shorter entry can.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub term: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconFile {
    pub version: u32,
    pub entries: Vec<LexiconEntry>,
}

/// Sum and count of matched entries. Scores from separate texts combine by
/// adding both fields.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LexiconScore {
    pub sum: f64,
    pub matches: usize,
}

impl LexiconScore {
    pub fn valence(self) -> f64 {
        (self.sum / self.matches.max(1) as f64).clamp(-1.0, 1.0)
    }

    pub fn combine(self, other: LexiconScore) -> LexiconScore {
        LexiconScore {
            sum: self.sum + other.sum,
            matches: self.matches + other.matches,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    version: u32,
    // (tokens, weight), longest phrases first
    entries: Vec<(Vec<String>, f64)>,
}

impl Lexicon {
    pub fn from_file(file: LexiconFile) -> Lexicon {
        let mut entries: Vec<(Vec<String>, f64)> = file
            .entries
            .into_iter()
            .map(|e| (tokenize(&e.term), e.weight))
            .filter(|(toks, _)| !toks.is_empty())
            .collect();
        entries.sort_by_key(|e| std::cmp::Reverse(e.0.len()));
        Lexicon {
            version: file.version,
            entries,
        }
    }

    pub fn from_json(json: &str) -> Result<Lexicon, serde_json::Error> {
        Ok(Self::from_file(serde_json::from_str(json)?))
    }

    /// The lexicon shipped in `data/v1/lexicon.json`.
    pub fn shipped() -> &'static Lexicon {
        static SHIPPED: OnceLock<Lexicon> = OnceLock::new();
        SHIPPED.get_or_init(|| {
            Lexicon::from_json(crate::data::LEXICON_JSON).expect("shipped lexicon parses")
        })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn score(&self, text: &str) -> LexiconScore {
        let tokens = tokenize(text);
        let mut score = LexiconScore::default();
        let mut i = 0;
        while i < tokens.len() {
            let hit = self.entries.iter().find(|(phrase, _)| {
                tokens.len() - i >= phrase.len()
                    && phrase.iter().zip(&tokens[i..]).all(|(a, b)| a == b)
            });
            match hit {
                Some((phrase, weight)) => {
                    score.sum += weight;
                    score.matches += 1;
                    i += phrase.len();
                }
                None => i += 1,
            }
        }
        score
    }

    pub fn valence(&self, text: &str) -> f64 {
        self.score(text).valence()
    }
}

/// Valence of `text` under the shipped lexicon, in [-1, 1].
pub fn lexicon_valence(text: &str) -> f64 {
    Lexicon::shipped().valence(text)
}
