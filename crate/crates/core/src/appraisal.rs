//! Appraisal of human input and rule-based emotion derivation.
//!
//! Appraisal (relevance, valence, impact, intent) comes from the backend.
//! The emotion is then derived from the appraisal and the personality by a
//! fixed, backend-independent rule table and closed-form intensity/arousal
//! formulas, so personality effects stay inspectable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::mock::{CUE, MODE, UTTERANCE};
use crate::llm::{
    self, lexicon_valence, CompletionBackend, LlmError, PromptBundle, Stage, StructuredOutcome,
    StructuredPayload,
};
use crate::persona::{PersonalityProfile, Trait};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InputError {
    #[error("utterance and cues are both empty")]
    Empty,
    #[error("day must be >= 1")]
    DayZero,
    #[error("cue texts must be non-empty single lines")]
    BadCue,
}

/// What the human did after the robot acted. Optional; scored with the
/// lexicon to fill an episode's reaction valence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reaction {
    #[serde(default)]
    pub utterance: String,
    #[serde(default)]
    pub cues: Vec<String>,
}

impl Reaction {
    pub fn text(&self) -> String {
        let mut parts: Vec<String> = self.cues.iter().map(|c| format!("[{c}]")).collect();
        if !self.utterance.is_empty() {
            parts.push(self.utterance.clone());
        }
        parts.join(" ")
    }

    pub fn valence(&self) -> f64 {
        let lex = llm::Lexicon::shipped();
        let score = self.cues.iter().fold(lex.score(&self.utterance), |acc, c| {
            acc.combine(lex.score(c))
        });
        score.valence()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanInput {
    #[serde(default)]
    pub utterance: String,
    /// Textual stand-ins for nonverbal signals, e.g. "dry and flat voice".
    #[serde(default)]
    pub cues: Vec<String>,
    pub day: u32,
    /// Turn counter; assigned by the session when a turn runs.
    #[serde(default)]
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<Reaction>,
}

impl HumanInput {
    pub fn new(utterance: impl Into<String>, cues: &[&str], day: u32) -> Self {
        HumanInput {
            utterance: utterance.into(),
            cues: cues.iter().map(|c| c.to_string()).collect(),
            day,
            timestamp: 0,
            reaction: None,
        }
    }

    pub fn with_reaction(mut self, utterance: &str, cues: &[&str]) -> Self {
        self.reaction = Some(Reaction {
            utterance: utterance.into(),
            cues: cues.iter().map(|c| c.to_string()).collect(),
        });
        self
    }

    pub fn validate(&self) -> Result<(), InputError> {
        if self.day == 0 {
            return Err(InputError::DayZero);
        }
        if self
            .cues
            .iter()
            .any(|c| c.trim().is_empty() || c.contains(['\n', '\r']))
        {
            return Err(InputError::BadCue);
        }
        if self.utterance.trim().is_empty() && self.cues.is_empty() {
            return Err(InputError::Empty);
        }
        Ok(())
    }

    /// One-line description used in episode summaries.
    pub fn describe(&self) -> String {
        let mut parts: Vec<String> = self.cues.iter().map(|c| format!("[{c}]")).collect();
        if !self.utterance.is_empty() {
            parts.push(format!("\"{}\"", self.utterance.replace(['\n', '\r'], " ")));
        }
        parts.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppraisalRecord {
    pub relevance: f64,
    pub valence: f64,
    pub impact: f64,
    pub inferred_intent: String,
    #[serde(default)]
    pub rationale: String,
}

impl AppraisalRecord {
    pub fn in_bounds(&self) -> bool {
        (0.0..=1.0).contains(&self.relevance)
            && (-1.0..=1.0).contains(&self.valence)
            && (0.0..=1.0).contains(&self.impact)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Joy,
    Amusement,
    Empathy,
    Concern,
    Satisfaction,
    Relief,
    Surprise,
    Frustration,
    Anxiety,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignClass {
    NonNegative,
    NonPositive,
    Unconstrained,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 10] = [
        EmotionLabel::Joy,
        EmotionLabel::Amusement,
        EmotionLabel::Empathy,
        EmotionLabel::Concern,
        EmotionLabel::Satisfaction,
        EmotionLabel::Relief,
        EmotionLabel::Surprise,
        EmotionLabel::Frustration,
        EmotionLabel::Anxiety,
        EmotionLabel::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Joy => "joy",
            EmotionLabel::Amusement => "amusement",
            EmotionLabel::Empathy => "empathy",
            EmotionLabel::Concern => "concern",
            EmotionLabel::Satisfaction => "satisfaction",
            EmotionLabel::Relief => "relief",
            EmotionLabel::Surprise => "surprise",
            EmotionLabel::Frustration => "frustration",
            EmotionLabel::Anxiety => "anxiety",
            EmotionLabel::Neutral => "neutral",
        }
    }

    /// Empathy is felt toward someone else's distress, so it carries either
    /// sign along with surprise and neutral.
    pub fn sign_class(self) -> SignClass {
        match self {
            EmotionLabel::Joy
            | EmotionLabel::Amusement
            | EmotionLabel::Satisfaction
            | EmotionLabel::Relief => SignClass::NonNegative,
            EmotionLabel::Concern | EmotionLabel::Frustration | EmotionLabel::Anxiety => {
                SignClass::NonPositive
            }
            EmotionLabel::Empathy | EmotionLabel::Surprise | EmotionLabel::Neutral => {
                SignClass::Unconstrained
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionState {
    pub label: EmotionLabel,
    pub intensity: f64,
    pub valence: f64,
    pub arousal: f64,
}

impl Default for EmotionState {
    fn default() -> Self {
        EmotionState::neutral()
    }
}

impl EmotionState {
    pub fn neutral() -> Self {
        EmotionState {
            label: EmotionLabel::Neutral,
            intensity: 0.0,
            valence: 0.0,
            arousal: 0.0,
        }
    }

    /// Every type invariant: bounds, the neutral intensity cap and the
    /// label's sign class.
    pub fn is_valid(&self) -> bool {
        let bounds = (0.0..=1.0).contains(&self.intensity)
            && (-1.0..=1.0).contains(&self.valence)
            && (0.0..=1.0).contains(&self.arousal);
        let neutral_cap = self.label != EmotionLabel::Neutral || self.intensity <= 0.1;
        let sign = match self.label.sign_class() {
            SignClass::NonNegative => self.valence >= 0.0,
            SignClass::NonPositive => self.valence <= 0.0,
            SignClass::Unconstrained => true,
        };
        bounds && neutral_cap && sign
    }

    pub fn summary(&self) -> String {
        format!(
            "{} intensity={:.2} valence={:.2} arousal={:.2}",
            self.label.as_str(),
            self.intensity,
            self.valence,
            self.arousal
        )
    }
}

/// Impact at or below this is too slight to feel anything about.
pub const NEUTRAL_IMPACT: f64 = 0.08;
/// Impact at or above this counts as high.
pub const HIGH_IMPACT: f64 = 0.67;
/// Trait numerics at or above this count as high, at or below `LOW_TRAIT`
/// as low.
pub const HIGH_TRAIT: f64 = 0.75;
pub const LOW_TRAIT: f64 = 0.25;

/// Label rule table over (valence sign, impact band, profile).
pub fn emotion_label(valence: f64, impact: f64, profile: &PersonalityProfile) -> EmotionLabel {
    let a = profile.numeric(Trait::Agreeableness);
    let c = profile.numeric(Trait::Conscientiousness);
    let e = profile.numeric(Trait::Extraversion);
    let n = profile.numeric(Trait::Neuroticism);
    if impact <= NEUTRAL_IMPACT {
        EmotionLabel::Neutral
    } else if valence < 0.0 {
        if a >= HIGH_TRAIT {
            EmotionLabel::Empathy
        } else if n >= HIGH_TRAIT && impact >= HIGH_IMPACT {
            EmotionLabel::Anxiety
        } else if impact >= HIGH_IMPACT && a <= LOW_TRAIT && e <= LOW_TRAIT {
            EmotionLabel::Frustration
        } else {
            EmotionLabel::Concern
        }
    } else if valence > 0.0 {
        if e >= HIGH_TRAIT {
            EmotionLabel::Amusement
        } else if n >= HIGH_TRAIT {
            EmotionLabel::Relief
        } else if c >= HIGH_TRAIT {
            EmotionLabel::Satisfaction
        } else {
            EmotionLabel::Joy
        }
    } else {
        EmotionLabel::Surprise
    }
}

/// Derive the robot's emotion from an appraisal.
///
/// intensity = clamp01(impact * (1 + 0.5 * (N - 0.5) * neg)), neg = 1 when
/// valence < 0; arousal = clamp01(impact * (0.5 + E)); valence is copied.
/// `prior` is accepted for mood continuity but not used by this rule set.
pub fn derive_emotion(
    appraisal: &AppraisalRecord,
    profile: &PersonalityProfile,
    _prior: &EmotionState,
    emotion_enabled: bool,
) -> EmotionState {
    if !emotion_enabled {
        return EmotionState::neutral();
    }
    let neg = if appraisal.valence < 0.0 { 1.0 } else { 0.0 };
    let n = profile.numeric(Trait::Neuroticism);
    let e = profile.numeric(Trait::Extraversion);
    let intensity = (appraisal.impact * (1.0 + 0.5 * (n - 0.5) * neg)).clamp(0.0, 1.0);
    let arousal = (appraisal.impact * (0.5 + e)).clamp(0.0, 1.0);
    EmotionState {
        label: emotion_label(appraisal.valence, appraisal.impact, profile),
        intensity,
        valence: appraisal.valence,
        arousal,
    }
}

/// The appraise-stage prompt. With emotion disabled the cue lines are left
/// out and the task asks for a literal reading.
pub fn appraisal_bundle(
    input: &HumanInput,
    persona_text: &str,
    memory_texts: Option<&[String]>,
    emotion_enabled: bool,
) -> PromptBundle {
    let mut lines = vec![format!(
        "{UTTERANCE}{}",
        input.utterance.replace(['\n', '\r'], " ")
    )];
    if emotion_enabled {
        lines.extend(input.cues.iter().map(|c| format!("{CUE}{c}")));
    }
    let mode = if emotion_enabled {
        "emotional"
    } else {
        "literal"
    };
    PromptBundle::assemble(
        Stage::Appraise,
        persona_text,
        memory_texts,
        &lines,
        Some(&format!("{MODE}{mode}\nDay: {}", input.day)),
    )
}

pub const LITERAL_PREFIX: &str = "Literal reading: ";

/// Appraise `input` with the backend.
///
/// With emotion disabled the cue-stripped bundle is sent in literal mode and
/// the valence is replaced by the lexicon score of the utterance alone, so
/// the result never depends on tone.
pub fn appraise(
    input: &HumanInput,
    profile: &PersonalityProfile,
    memory_texts: Option<&[String]>,
    emotion_enabled: bool,
    backend: &dyn CompletionBackend,
    retry_budget: u32,
) -> Result<StructuredOutcome<AppraisalRecord>, LlmError> {
    let bundle = appraisal_bundle(input, &profile.render(), memory_texts, emotion_enabled);
    let mut outcome = llm::complete_structured(backend, retry_budget, &bundle, |p| match p {
        StructuredPayload::Appraisal(r) => Ok(r),
        other => Err(format!("expected appraisal payload, got {}", other.stage())),
    })?;
    if !emotion_enabled {
        let r = &mut outcome.value;
        r.valence = lexicon_valence(&input.utterance);
        if !r.inferred_intent.starts_with(LITERAL_PREFIX) {
            r.inferred_intent = format!("{LITERAL_PREFIX}{}", r.inferred_intent);
        }
    }
    Ok(outcome)
}
