//! Per-turn pipeline and session state.
//!
//! A turn runs retrieve -> appraise -> derive emotion -> select action ->
//! log episode. Retrieval and logging are skipped when memory is ablated;
//! cues are stripped and emotion pinned to neutral when emotional
//! processing is ablated. Turns are transactional: the session is only
//! mutated after every stage succeeded.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{self, ActionSelection, ActionSpace, SelectionContext};
use crate::appraisal::{self, AppraisalRecord, EmotionState, HumanInput, InputError};
use crate::llm::{self, BackendConfig, BackendError, CompletionBackend, LlmError};
use crate::memory::{
    self, retrieve, EpisodicRecord, MemoryError, MemoryStore, ReflectError, RetrievalQuery,
    Retrieved, SemanticMemory, DEFAULT_DECAY_PER_DAY, DEFAULT_TOP_K,
};
use crate::persona::PersonalityProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ablation {
    #[serde(default = "yes")]
    pub memory_enabled: bool,
    #[serde(default = "yes")]
    pub emotion_enabled: bool,
}

fn yes() -> bool {
    true
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            memory_enabled: true,
            emotion_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_decay")]
    pub decay_per_day: f64,
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}
fn default_decay() -> f64 {
    DEFAULT_DECAY_PER_DAY
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            top_k: DEFAULT_TOP_K,
            decay_per_day: DEFAULT_DECAY_PER_DAY,
        }
    }
}

fn default_space() -> String {
    "kitchen".into()
}

/// Agent configuration document (`data/v1/configs/*.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub profile: PersonalityProfile,
    #[serde(default = "default_space")]
    pub space_id: String,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted path of the offending field (`.` for the document itself).
    pub path: String,
    pub message: String,
}

impl AgentConfig {
    pub fn new(name: &str, profile: PersonalityProfile) -> Self {
        AgentConfig {
            schema_version: crate::SCHEMA_VERSION,
            name: name.into(),
            profile,
            space_id: default_space(),
            backend: BackendConfig::default(),
            ablation: Ablation::default(),
            retrieval: RetrievalConfig::default(),
        }
    }

    pub fn with_ablation(mut self, memory_enabled: bool, emotion_enabled: bool) -> Self {
        self.ablation = Ablation {
            memory_enabled,
            emotion_enabled,
        };
        self
    }

    /// Parse and validate, reporting the path of the first bad field.
    pub fn from_json(json: &str) -> Result<AgentConfig, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(json);
        let config: AgentConfig =
            serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_value(value: serde_json::Value) -> Result<AgentConfig, ConfigError> {
        let config: AgentConfig =
            serde_path_to_error::deserialize(value).map_err(|e| ConfigError {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |path: &str, message: String| ConfigError {
            path: path.into(),
            message,
        };
        if self.schema_version != crate::SCHEMA_VERSION {
            return Err(bad(
                "schema_version",
                format!("unsupported schema_version {}", self.schema_version),
            ));
        }
        if self.retrieval.top_k == 0 {
            return Err(bad("retrieval.top_k", "top_k must be >= 1".into()));
        }
        if !(self.retrieval.decay_per_day.is_finite() && self.retrieval.decay_per_day >= 0.0) {
            return Err(bad(
                "retrieval.decay_per_day",
                "decay must be finite and >= 0".into(),
            ));
        }
        self.backend
            .validate()
            .map_err(|e| bad("backend", e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown action space `{0}`")]
    UnknownSpace(String),
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid input: {0}")]
    Input(#[from] InputError),
    #[error("input day {got} is before the current day {open}")]
    DayInPast { open: u32, got: u32 },
    #[error("input day {got} is after the current day {open}; end the day first")]
    DayNotClosed { open: u32, got: u32 },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

impl From<ReflectError> for EngineError {
    fn from(e: ReflectError) -> Self {
        match e {
            ReflectError::Memory(m) => EngineError::Memory(m),
            ReflectError::Llm(l) => EngineError::Llm(l),
        }
    }
}

impl EngineError {
    /// Failures caused by the completion backend (the API maps these to 502).
    pub fn is_backend_failure(&self) -> bool {
        matches!(self, EngineError::Llm(_) | EngineError::Backend(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStage {
    Retrieve,
    Appraise,
    DeriveEmotion,
    SelectAction,
    LogEpisode,
    Reflect,
}

/// One executed pipeline stage. Hashes are set for stages that called the
/// backend: `prompt_hash` is the sha256 of the rendered bundle that
/// produced the accepted answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: TraceStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_hash: Option<String>,
    #[serde(default)]
    pub attempts: u32,
    #[serde(default)]
    pub note: String,
}

impl StageRecord {
    fn local(stage: TraceStage, note: String) -> Self {
        StageRecord {
            stage,
            prompt_hash: None,
            response_hash: None,
            attempts: 0,
            note,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clock {
    pub day: u32,
    /// Completed turns within the current day.
    pub turn: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    pub input: HumanInput,
    pub retrieved: Vec<Retrieved>,
    pub appraisal: AppraisalRecord,
    pub emotion: EmotionState,
    pub selection: ActionSelection,
    pub episode_id: Option<String>,
    pub trace: Vec<StageRecord>,
}

/// Outcome of closing a day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub day: u32,
    pub memories: Vec<SemanticMemory>,
    pub episodes_considered: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<StageRecord>,
}

/// Persistable session state (everything except the backend handle and
/// the in-memory transcript).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub schema_version: u32,
    pub id: String,
    pub config: AgentConfig,
    pub store: MemoryStore,
    pub emotion: EmotionState,
    pub clock: Clock,
    /// Total completed turns; the next turn's timestamp is `steps + 1`.
    pub steps: u64,
}

/// One character's live state. Steps on a session are strictly serialized
/// (`&mut self`); distinct sessions are independent.
#[derive(Clone)]
pub struct Session {
    state: SessionState,
    space: ActionSpace,
    persona_text: String,
    backend: Arc<dyn CompletionBackend>,
    transcript: Vec<TurnResult>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.state.id)
            .field("clock", &self.state.clock)
            .finish_non_exhaustive()
    }
}

impl Session {
    /// Session over a shipped action space with the configured backend.
    pub fn new(config: AgentConfig) -> Result<Session, EngineError> {
        config.validate()?;
        let space = action::shipped_space(&config.space_id)
            .ok_or_else(|| EngineError::UnknownSpace(config.space_id.clone()))?;
        let backend = llm::build_backend(&config.backend)?;
        Session::with_parts(config, space, backend)
    }

    /// Session with an explicit space and backend (custom spaces, test
    /// doubles).
    pub fn with_parts(
        config: AgentConfig,
        space: ActionSpace,
        backend: Arc<dyn CompletionBackend>,
    ) -> Result<Session, EngineError> {
        config.validate()?;
        if space.id != config.space_id {
            return Err(EngineError::UnknownSpace(config.space_id.clone()));
        }
        let state = SessionState {
            schema_version: crate::SCHEMA_VERSION,
            id: uuid::Uuid::new_v4().to_string(),
            config,
            store: MemoryStore::new(),
            emotion: EmotionState::neutral(),
            clock: Clock { day: 1, turn: 0 },
            steps: 0,
        };
        Ok(Session::from_state(state, space, backend))
    }

    /// Rebuild a session around persisted state.
    pub fn from_state(
        state: SessionState,
        space: ActionSpace,
        backend: Arc<dyn CompletionBackend>,
    ) -> Session {
        let persona_text = state.config.profile.render();
        Session {
            state,
            space,
            persona_text,
            backend,
            transcript: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.state.id
    }

    pub fn set_id(&mut self, id: String) {
        self.state.id = id;
    }

    pub fn config(&self) -> &AgentConfig {
        &self.state.config
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn store(&self) -> &MemoryStore {
        &self.state.store
    }

    pub fn emotion(&self) -> &EmotionState {
        &self.state.emotion
    }

    pub fn clock(&self) -> Clock {
        self.state.clock
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn persona_text(&self) -> &str {
        &self.persona_text
    }

    pub fn transcript(&self) -> &[TurnResult] {
        &self.transcript
    }

    pub fn set_backend(&mut self, backend: Arc<dyn CompletionBackend>) {
        self.backend = backend;
    }

    fn retry_budget(&self) -> u32 {
        self.state.config.backend.retry_budget
    }

    /// Run one turn. `input.day` must equal the current day; call
    /// [`Session::end_day`] (or [`Session::advance_to`]) to move on. On any
    /// error the session is left exactly as it was.
    pub fn step(&mut self, mut input: HumanInput) -> Result<TurnResult, EngineError> {
        input.validate()?;
        let open = self.state.clock.day;
        if input.day < open {
            return Err(EngineError::DayInPast {
                open,
                got: input.day,
            });
        }
        if input.day > open {
            return Err(EngineError::DayNotClosed {
                open,
                got: input.day,
            });
        }
        input.timestamp = self.state.steps + 1;
        let ablation = self.state.config.ablation;
        let profile = &self.state.config.profile;
        let budget = self.retry_budget();
        let mut trace = Vec::new();

        let retrieved = if ablation.memory_enabled {
            let mut context = input.utterance.clone();
            if ablation.emotion_enabled {
                for c in &input.cues {
                    context.push(' ');
                    context.push_str(c);
                }
            }
            let query = RetrievalQuery {
                context,
                now_day: input.day,
                top_k: self.state.config.retrieval.top_k,
                decay_per_day: self.state.config.retrieval.decay_per_day,
            };
            let r = retrieve(&self.state.store, &query);
            let ids: Vec<&str> = r.iter().map(|m| m.id.as_str()).collect();
            trace.push(StageRecord::local(TraceStage::Retrieve, ids.join(",")));
            r
        } else {
            Vec::new()
        };
        let memory_texts: Vec<String> = retrieved.iter().map(|m| m.text.clone()).collect();
        let memory_arg = ablation.memory_enabled.then_some(memory_texts.as_slice());

        let appraised = appraisal::appraise(
            &input,
            profile,
            memory_arg,
            ablation.emotion_enabled,
            self.backend.as_ref(),
            budget,
        )?;
        trace.push(StageRecord {
            stage: TraceStage::Appraise,
            prompt_hash: Some(appraised.prompt_hash),
            response_hash: Some(appraised.response_hash),
            attempts: appraised.attempts,
            note: String::new(),
        });
        let appraisal = appraised.value;

        let emotion = appraisal::derive_emotion(
            &appraisal,
            profile,
            &self.state.emotion,
            ablation.emotion_enabled,
        );
        trace.push(StageRecord::local(
            TraceStage::DeriveEmotion,
            emotion.summary(),
        ));

        let ctx = SelectionContext {
            input: &input,
            appraisal: &appraisal,
            emotion: &emotion,
            profile,
            memory_texts: memory_arg,
            space: &self.space,
            emotion_enabled: ablation.emotion_enabled,
        };
        let selected = action::select_action(&ctx, self.backend.as_ref(), budget)?;
        trace.push(StageRecord {
            stage: TraceStage::SelectAction,
            prompt_hash: Some(selected.prompt_hash),
            response_hash: selected.response_hash,
            attempts: selected.attempts,
            note: selected
                .fallback_reason
                .map(|r| format!("fallback: {r}"))
                .unwrap_or_default(),
        });
        let selection = selected.selection;

        // Everything below mutates; nothing after this point can fail
        // except the episode append, which is checked before committing.
        let mut episode_id = None;
        if ablation.memory_enabled {
            let record = self.episode_for(&input, &appraisal, &emotion, &selection);
            let mut store = self.state.store.clone();
            let id = store.log_episode(record)?;
            trace.push(StageRecord::local(TraceStage::LogEpisode, id.clone()));
            episode_id = Some(id);
            self.state.store = store;
        }
        self.state.emotion = emotion;
        self.state.clock.turn += 1;
        self.state.steps += 1;
        let result = TurnResult {
            input,
            retrieved,
            appraisal,
            emotion,
            selection,
            episode_id,
            trace,
        };
        self.transcript.push(result.clone());
        Ok(result)
    }

    fn episode_for(
        &self,
        input: &HumanInput,
        appraisal: &AppraisalRecord,
        emotion: &EmotionState,
        selection: &ActionSelection,
    ) -> EpisodicRecord {
        let (observed_reaction, reaction_valence) = match &input.reaction {
            Some(r) => (r.text(), r.valence()),
            None => (String::new(), 0.0),
        };
        let mut record = EpisodicRecord {
            id: String::new(),
            day: input.day,
            timestamp: input.timestamp,
            human_action: format!(
                "{} (read as: {})",
                input.describe(),
                appraisal.inferred_intent
            ),
            human_valence: appraisal.valence,
            robot_emotion: *emotion,
            robot_response: selection.clone(),
            observed_reaction,
            reaction_valence,
            importance: 0.0,
        };
        record.importance = memory::score_importance(&record);
        record
    }

    /// Close the current day: reflect over its episodes (memory enabled) and
    /// advance the clock. With memory disabled this only advances the clock.
    pub fn end_day(&mut self) -> Result<DayReport, EngineError> {
        let day = self.state.clock.day;
        let report = if self.state.config.ablation.memory_enabled {
            let mut store = self.state.store.clone();
            let r = store.reflect(
                day,
                &self.persona_text,
                self.backend.as_ref(),
                self.retry_budget(),
            )?;
            self.state.store = store;
            DayReport {
                day,
                episodes_considered: r.episodes_considered,
                trace: r.call.map(|c| StageRecord {
                    stage: TraceStage::Reflect,
                    prompt_hash: Some(c.prompt_hash),
                    response_hash: Some(c.response_hash),
                    attempts: c.attempts,
                    note: String::new(),
                }),
                memories: r.memories,
            }
        } else {
            DayReport {
                day,
                memories: Vec::new(),
                episodes_considered: 0,
                trace: None,
            }
        };
        self.state.clock = Clock {
            day: day + 1,
            turn: 0,
        };
        Ok(report)
    }

    /// End days until the clock reaches `day`.
    pub fn advance_to(&mut self, day: u32) -> Result<Vec<DayReport>, EngineError> {
        let mut reports = Vec::new();
        while self.state.clock.day < day {
            reports.push(self.end_day()?);
        }
        Ok(reports)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Turn(Box<TurnResult>),
    EndDay(DayReport),
}

/// Replay output. Contains no session id or wall-clock data, so equal
/// inputs under the mock serialize to identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub schema_version: u32,
    pub config: AgentConfig,
    pub entries: Vec<TranscriptEntry>,
    pub final_store: MemoryStore,
}

impl Transcript {
    pub fn turns(&self) -> impl Iterator<Item = &TurnResult> {
        self.entries.iter().filter_map(|e| match e {
            TranscriptEntry::Turn(t) => Some(t.as_ref()),
            TranscriptEntry::EndDay(_) => None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

/// Run `inputs` through a fresh session, closing days as the input day
/// moves forward and closing the last day at the end.
pub fn replay(config: &AgentConfig, inputs: &[HumanInput]) -> Result<Transcript, EngineError> {
    replay_session(Session::new(config.clone())?, inputs)
}

pub fn replay_session(
    mut session: Session,
    inputs: &[HumanInput],
) -> Result<Transcript, EngineError> {
    let mut entries = Vec::new();
    for input in inputs {
        for r in session.advance_to(input.day)? {
            entries.push(TranscriptEntry::EndDay(r));
        }
        entries.push(TranscriptEntry::Turn(Box::new(
            session.step(input.clone())?,
        )));
    }
    if !inputs.is_empty() {
        entries.push(TranscriptEntry::EndDay(session.end_day()?));
    }
    Ok(Transcript {
        schema_version: crate::SCHEMA_VERSION,
        config: session.config().clone(),
        entries,
        final_store: session.store().clone(),
    })
}
