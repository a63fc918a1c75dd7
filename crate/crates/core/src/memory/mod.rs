//! Episodic and semantic memory.
//!
//! Each completed turn is summarized into an [`EpisodicRecord`]. At the end
//! of a day the store asks the backend to reflect over that day's episodes
//! and appends the resulting [`SemanticMemory`] insights. Both kinds are
//! pooled for retrieval (see [`retrieve`]).

mod retrieval;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ActionSelection;
use crate::appraisal::EmotionState;
use crate::llm::{self, CompletionBackend, LlmError, PromptBundle, Stage, StructuredPayload};

pub use retrieval::{
    retrieve, MemoryKind, RetrievalQuery, Retrieved, DEFAULT_DECAY_PER_DAY, DEFAULT_TOP_K,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicRecord {
    /// Assigned by the store on append.
    #[serde(default)]
    pub id: String,
    pub day: u32,
    pub timestamp: u64,
    pub human_action: String,
    pub human_valence: f64,
    pub robot_emotion: EmotionState,
    pub robot_response: ActionSelection,
    #[serde(default)]
    pub observed_reaction: String,
    #[serde(default)]
    pub reaction_valence: f64,
    pub importance: f64,
}

impl EpisodicRecord {
    /// Retrieval and prompt text.
    pub fn text(&self) -> String {
        let mut out = format!(
            "Day {}: human {}; robot felt {} and did {} saying \"{}\"",
            self.day,
            self.human_action,
            self.robot_emotion.label.as_str(),
            self.robot_response.call_text(),
            self.robot_response.utterance,
        );
        if !self.observed_reaction.is_empty() {
            out.push_str("; reaction: ");
            out.push_str(&self.observed_reaction);
        }
        out.replace(['\n', '\r'], " ")
    }

    fn in_bounds(&self) -> bool {
        (-1.0..=1.0).contains(&self.human_valence)
            && (-1.0..=1.0).contains(&self.reaction_valence)
            && (0.0..=1.0).contains(&self.importance)
    }
}

/// min(1, (|human_valence| + |reaction_valence|) / 2 + bonus), where the
/// bonus is 0.2 when the robot did something beyond speaking.
pub fn score_importance(record: &EpisodicRecord) -> f64 {
    let bonus = if record.robot_response.is_speech_only() {
        0.0
    } else {
        0.2
    };
    ((record.human_valence.abs() + record.reaction_valence.abs()) / 2.0 + bonus).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticMemory {
    pub id: String,
    pub statement: String,
    pub supporting_episodes: Vec<String>,
    pub created_day: u32,
    /// Timestamp of the newest episode when the memory was created; breaks
    /// recency ties in retrieval.
    pub created_at: u64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MemoryError {
    #[error("timestamp {got} is not greater than the last stored timestamp {last}")]
    OrderViolation { last: u64, got: u64 },
    #[error("episode day {got} is before the open day {current}")]
    DayClosed { current: u32, got: u32 },
    #[error("episode values out of bounds")]
    OutOfBounds,
    #[error("reflection requested for day {got} but the open day is {expected}")]
    DayMismatch { expected: u32, got: u32 },
    #[error("reflection cites episode index {index} but only {count} were shown")]
    BadCitation { index: usize, count: usize },
}

#[derive(Debug, Error)]
pub enum ReflectError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Append-only memory of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryStore {
    pub episodic: Vec<EpisodicRecord>,
    pub semantic: Vec<SemanticMemory>,
    /// The day whose episodes are still open (not yet reflected).
    pub current_day: u32,
}

impl Default for MemoryStore {
    fn default() -> Self {
        MemoryStore::new()
    }
}

/// Result of one reflection, with trace data when the backend was called.
#[derive(Debug, Clone)]
pub struct Reflection {
    pub day: u32,
    pub memories: Vec<SemanticMemory>,
    pub episodes_considered: usize,
    pub call: Option<ReflectionCall>,
}

#[derive(Debug, Clone)]
pub struct ReflectionCall {
    pub prompt_hash: String,
    pub response_hash: String,
    pub attempts: u32,
}

impl MemoryStore {
    pub fn new() -> Self {
        MemoryStore {
            episodic: Vec::new(),
            semantic: Vec::new(),
            current_day: 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.episodic.is_empty() && self.semantic.is_empty()
    }

    pub fn len(&self) -> usize {
        self.episodic.len() + self.semantic.len()
    }

    pub fn last_timestamp(&self) -> Option<u64> {
        self.episodic.last().map(|e| e.timestamp)
    }

    pub fn episode(&self, id: &str) -> Option<&EpisodicRecord> {
        self.episodic.iter().find(|e| e.id == id)
    }

    /// Append an episode. The store assigns the id `ep-<timestamp>`, which
    /// is unique because timestamps strictly increase.
    pub fn log_episode(&mut self, mut record: EpisodicRecord) -> Result<String, MemoryError> {
        if let Some(last) = self.last_timestamp() {
            if record.timestamp <= last {
                return Err(MemoryError::OrderViolation {
                    last,
                    got: record.timestamp,
                });
            }
        }
        if record.day < self.current_day {
            return Err(MemoryError::DayClosed {
                current: self.current_day,
                got: record.day,
            });
        }
        if !record.in_bounds() {
            return Err(MemoryError::OutOfBounds);
        }
        record.id = format!("ep-{}", record.timestamp);
        let id = record.id.clone();
        self.episodic.push(record);
        Ok(id)
    }

    /// Prompt for reflecting over `episodes` (a day partition).
    pub fn reflection_bundle(
        &self,
        persona_text: &str,
        episodes: &[&EpisodicRecord],
    ) -> PromptBundle {
        let lines: Vec<String> = episodes
            .iter()
            .enumerate()
            .map(|(i, e)| {
                format!(
                    "[{i}] day={} action={} human_valence={:.2} reaction_valence={:.2} :: {}",
                    e.day,
                    e.robot_response.action_id,
                    e.human_valence,
                    e.reaction_valence,
                    e.text()
                )
            })
            .collect();
        let known: Vec<String> = self.semantic.iter().map(|s| s.statement.clone()).collect();
        PromptBundle::assemble(Stage::Reflect, persona_text, Some(&known), &lines, None)
    }

    /// End-of-day reflection over the episodes of `day`, which must be the
    /// open day. Existing semantic memories are shown to the backend as
    /// context. A day without episodes yields nothing and makes no backend
    /// call. On success the open day advances to `day + 1`; on error the
    /// store is untouched.
    pub fn reflect(
        &mut self,
        day: u32,
        persona_text: &str,
        backend: &dyn CompletionBackend,
        retry_budget: u32,
    ) -> Result<Reflection, ReflectError> {
        if day != self.current_day {
            return Err(MemoryError::DayMismatch {
                expected: self.current_day,
                got: day,
            }
            .into());
        }
        let episodes: Vec<&EpisodicRecord> =
            self.episodic.iter().filter(|e| e.day == day).collect();
        if episodes.is_empty() {
            self.current_day = day + 1;
            return Ok(Reflection {
                day,
                memories: Vec::new(),
                episodes_considered: 0,
                call: None,
            });
        }
        let bundle = self.reflection_bundle(persona_text, &episodes);
        let count = episodes.len();
        let outcome = llm::complete_structured(backend, retry_budget, &bundle, |p| match p {
            StructuredPayload::Reflection(items) => {
                for item in &items {
                    if let Some(&index) = item.supporting.iter().find(|&&i| i >= count) {
                        return Err(MemoryError::BadCitation { index, count }.to_string());
                    }
                }
                Ok(items)
            }
            other => Err(format!(
                "expected reflection payload, got {}",
                other.stage()
            )),
        })?;
        let ids: Vec<String> = episodes.iter().map(|e| e.id.clone()).collect();
        let created_at = episodes.iter().map(|e| e.timestamp).max().unwrap_or(0);
        let mut seen: BTreeSet<String> =
            self.semantic.iter().map(|s| s.statement.clone()).collect();
        let mut memories = Vec::new();
        for item in outcome.value {
            let statement = item.statement.trim().to_string();
            if !seen.insert(statement.clone()) {
                continue;
            }
            let mut supporting: Vec<usize> = item.supporting;
            supporting.sort_unstable();
            supporting.dedup();
            memories.push(SemanticMemory {
                id: format!("sem-{}", self.semantic.len() + memories.len() + 1),
                statement,
                supporting_episodes: supporting.into_iter().map(|i| ids[i].clone()).collect(),
                created_day: day,
                created_at,
                confidence: item.confidence,
            });
        }
        self.semantic.extend(memories.iter().cloned());
        self.current_day = day + 1;
        Ok(Reflection {
            day,
            memories,
            episodes_considered: count,
            call: Some(ReflectionCall {
                prompt_hash: outcome.prompt_hash,
                response_hash: outcome.response_hash,
                attempts: outcome.attempts,
            }),
        })
    }

    /// Re-apply a recorded reflection result (event-log replay) without
    /// calling a backend.
    pub fn apply_reflection(
        &mut self,
        day: u32,
        memories: &[SemanticMemory],
    ) -> Result<(), MemoryError> {
        if day != self.current_day {
            return Err(MemoryError::DayMismatch {
                expected: self.current_day,
                got: day,
            });
        }
        self.semantic.extend(memories.iter().cloned());
        self.current_day = day + 1;
        Ok(())
    }

    /// Check the store invariants: ordered timestamps, unique ids, resolvable
    /// citations and creation days after the cited episodes.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut ids = BTreeSet::new();
        for w in self.episodic.windows(2) {
            if w[1].timestamp <= w[0].timestamp {
                return Err(format!("timestamps out of order at {}", w[1].id));
            }
        }
        for e in &self.episodic {
            if !ids.insert(e.id.as_str()) {
                return Err(format!("duplicate id {}", e.id));
            }
        }
        for s in &self.semantic {
            if !ids.insert(s.id.as_str()) {
                return Err(format!("duplicate id {}", s.id));
            }
            if s.supporting_episodes.is_empty() {
                return Err(format!("{} cites nothing", s.id));
            }
            for cited in &s.supporting_episodes {
                let Some(e) = self.episode(cited) else {
                    return Err(format!("{} cites unknown {cited}", s.id));
                };
                if e.day > s.created_day {
                    return Err(format!("{} created before {cited}", s.id));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appraisal::EmotionLabel;
    use crate::llm::{BackendError, MockBackend, ScriptedBackend};

    pub(crate) fn episode(day: u32, ts: u64, action: &str, hv: f64, rv: f64) -> EpisodicRecord {
        let mut r = EpisodicRecord {
            id: String::new(),
            day,
            timestamp: ts,
            human_action: format!("turn {ts}"),
            human_valence: hv,
            robot_emotion: EmotionState {
                label: EmotionLabel::Concern,
                intensity: 0.4,
                valence: hv.min(0.0),
                arousal: 0.3,
            },
            robot_response: ActionSelection {
                action_id: action.into(),
                bindings: Default::default(),
                utterance: "ok".into(),
                rationale: String::new(),
            },
            observed_reaction: String::new(),
            reaction_valence: rv,
            importance: 0.0,
        };
        r.importance = score_importance(&r);
        r
    }

    #[test]
    fn append_semantics() {
        let mut store = MemoryStore::new();
        let id = store
            .log_episode(episode(1, 1, "speak_only", 0.0, 0.0))
            .unwrap();
        assert_eq!(store.episodic.len(), 1);
        assert_eq!(store.episodic[0].id, id);
        assert_eq!(
            store.log_episode(episode(1, 1, "speak_only", 0.0, 0.0)),
            Err(MemoryError::OrderViolation { last: 1, got: 1 })
        );
        assert_eq!(store.episodic.len(), 1);
    }

    #[test]
    fn importance_formula() {
        assert_eq!(
            score_importance(&episode(1, 1, "speak_only", 0.0, 0.0)),
            0.0
        );
        assert_eq!(
            score_importance(&episode(1, 1, "perform_motion", -1.0, -1.0)),
            1.0
        );
        let x = score_importance(&episode(1, 1, "perform_motion", 0.6, 0.8));
        assert!((x - 0.9).abs() < 1e-12);
    }

    #[test]
    fn reflection_over_playful_day() {
        let mut store = MemoryStore::new();
        for ts in 1..=3 {
            store
                .log_episode(episode(1, ts, "perform_motion", -0.4, 0.7))
                .unwrap();
        }
        let r = store.reflect(1, "", &MockBackend::default(), 2).unwrap();
        assert_eq!(r.memories.len(), 1);
        let m = &r.memories[0];
        assert!(m
            .statement
            .contains("prefers cheerful amusement during low moments"));
        assert_eq!(m.supporting_episodes, vec!["ep-1", "ep-2", "ep-3"]);
        assert!((0.0..=1.0).contains(&m.confidence));
        assert_eq!(store.current_day, 2);
        store.check_invariants().unwrap();

        // Same day again is rejected.
        assert!(matches!(
            store.reflect(1, "", &MockBackend::default(), 2),
            Err(ReflectError::Memory(MemoryError::DayMismatch { .. }))
        ));
    }

    #[test]
    fn empty_day_advances_without_a_call() {
        let mut store = MemoryStore::new();
        let scripted = ScriptedBackend::new(vec![]);
        let r = store.reflect(1, "", &scripted, 2).unwrap();
        assert!(r.memories.is_empty());
        assert_eq!(store.current_day, 2);
        assert_eq!(scripted.calls(), 0);
    }

    #[test]
    fn failed_reflection_leaves_store_untouched() {
        let mut store = MemoryStore::new();
        store
            .log_episode(episode(1, 1, "perform_motion", -0.4, 0.7))
            .unwrap();
        let before = store.clone();
        let scripted = ScriptedBackend::new(vec![Err(BackendError::Timeout)]);
        assert!(store.reflect(1, "", &scripted, 2).is_err());
        assert_eq!(store, before);
    }

    #[test]
    fn out_of_range_citations_are_reprompted() {
        let mut store = MemoryStore::new();
        store
            .log_episode(episode(1, 1, "perform_motion", -0.4, 0.7))
            .unwrap();
        let scripted = ScriptedBackend::new(vec![
            Ok(r#"{"memories":[{"statement":"x","supporting":[4],"confidence":0.5}]}"#.into()),
            Ok(r#"{"memories":[{"statement":"x","supporting":[0,0],"confidence":0.5}]}"#.into()),
        ]);
        let r = store.reflect(1, "", &scripted, 1).unwrap();
        assert_eq!(r.memories[0].supporting_episodes, vec!["ep-1"]);
        assert_eq!(r.call.unwrap().attempts, 2);
    }

    #[test]
    fn closed_days_reject_episodes() {
        let mut store = MemoryStore::new();
        store.reflect(1, "", &MockBackend::default(), 0).unwrap();
        assert_eq!(
            store.log_episode(episode(1, 1, "speak_only", 0.0, 0.0)),
            Err(MemoryError::DayClosed { current: 2, got: 1 })
        );
    }

    #[test]
    fn store_round_trips() {
        let mut store = MemoryStore::new();
        store
            .log_episode(episode(1, 1, "perform_motion", -0.35, 0.8))
            .unwrap();
        let json = serde_json::to_string(&store).unwrap();
        assert_eq!(serde_json::from_str::<MemoryStore>(&json).unwrap(), store);
    }
}
