use serde::{Deserialize, Serialize};

use super::MemoryStore;
use crate::text::lexical_overlap;

/// ln(2) / 7: a one-week half-life in day units.
pub const DEFAULT_DECAY_PER_DAY: f64 = std::f64::consts::LN_2 / 7.0;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalQuery {
    pub context: String,
    /// Current day; recency decays with whole days elapsed.
    pub now_day: u32,
    pub top_k: usize,
    pub decay_per_day: f64,
}

impl RetrievalQuery {
    pub fn new(context: impl Into<String>, now_day: u32, top_k: usize) -> Self {
        RetrievalQuery {
            context: context.into(),
            now_day,
            top_k,
            decay_per_day: DEFAULT_DECAY_PER_DAY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryKind {
    Episodic,
    Semantic,
}

/// One ranked memory with its score breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub kind: MemoryKind,
    pub id: String,
    pub text: String,
    pub score: f64,
    pub recency: f64,
    pub importance: f64,
    pub relevance: f64,
    /// Episode timestamp, or creation stamp for semantic memories.
    pub timestamp: u64,
}

/// Rank episodic and semantic memories together.
///
/// score = (recency + importance + relevance) / 3 with
/// recency = exp(-decay * days_elapsed), importance = stored importance
/// (confidence for semantic memories) and relevance = share of the query's
/// content words found in the memory text. Ties go to the newer memory,
/// then to the smaller id.
pub fn retrieve(store: &MemoryStore, query: &RetrievalQuery) -> Vec<Retrieved> {
    if query.top_k == 0 {
        return Vec::new();
    }
    let recency =
        |day: u32| (-query.decay_per_day * query.now_day.saturating_sub(day) as f64).exp();
    let mut all: Vec<Retrieved> = Vec::with_capacity(store.len());
    for e in &store.episodic {
        let text = e.text();
        all.push(scored(
            MemoryKind::Episodic,
            &e.id,
            text,
            recency(e.day),
            e.importance,
            e.timestamp,
            &query.context,
        ));
    }
    for s in &store.semantic {
        all.push(scored(
            MemoryKind::Semantic,
            &s.id,
            s.statement.clone(),
            recency(s.created_day),
            s.confidence,
            s.created_at,
            &query.context,
        ));
    }
    all.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.timestamp.cmp(&a.timestamp))
            .then_with(|| a.id.cmp(&b.id))
    });
    all.truncate(query.top_k);
    all
}

fn scored(
    kind: MemoryKind,
    id: &str,
    text: String,
    recency: f64,
    importance: f64,
    timestamp: u64,
    context: &str,
) -> Retrieved {
    let relevance = lexical_overlap(context, &text);
    Retrieved {
        kind,
        id: id.to_string(),
        score: ((recency + importance + relevance) / 3.0).clamp(0.0, 1.0),
        text,
        recency,
        importance,
        relevance,
        timestamp,
    }
}
