//! Big Five personality profiles.
//!
//! A profile is built one of three ways: directly from trait levels
//! ([`PersonalityProfile::from_parameters`]), inferred from a free-text
//! description by the completion backend ([`PersonalityProfile::from_description`]),
//! or drawn from a seeded PRNG ([`PersonalityProfile::random`]). Profiles are
//! immutable once built.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{self, CompletionBackend, LlmError, PromptBundle, Stage, StructuredPayload};

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("personality description is empty")]
    EmptyDescription,
    #[error("invalid descriptor {0:?}: must be non-empty, trimmed, single-line text")]
    InvalidDescriptor(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Five-point ordinal trait level with fixed numeric anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TraitLevel {
    Low,
    MediumLow,
    Medium,
    MediumHigh,
    High,
}

impl TraitLevel {
    pub const ALL: [TraitLevel; 5] = [
        TraitLevel::Low,
        TraitLevel::MediumLow,
        TraitLevel::Medium,
        TraitLevel::MediumHigh,
        TraitLevel::High,
    ];

    pub fn numeric(self) -> f64 {
        match self {
            TraitLevel::Low => 0.0,
            TraitLevel::MediumLow => 0.25,
            TraitLevel::Medium => 0.5,
            TraitLevel::MediumHigh => 0.75,
            TraitLevel::High => 1.0,
        }
    }

    /// Inverse of [`numeric`](Self::numeric); only the five anchors map back.
    pub fn from_numeric(value: f64) -> Option<TraitLevel> {
        Self::ALL.into_iter().find(|l| l.numeric() == value)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TraitLevel::Low => "Low",
            TraitLevel::MediumLow => "Medium-low",
            TraitLevel::Medium => "Medium",
            TraitLevel::MediumHigh => "Medium-high",
            TraitLevel::High => "High",
        }
    }
}

impl fmt::Display for TraitLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown trait level {0:?} (expected Low, Medium-low, Medium, Medium-high or High)")]
pub struct UnknownLevel(pub String);

impl FromStr for TraitLevel {
    type Err = UnknownLevel;

    /// Accepts `Medium-low`, `medium low`, `MediumLow` and friends.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "low" => Ok(TraitLevel::Low),
            "mediumlow" => Ok(TraitLevel::MediumLow),
            "medium" => Ok(TraitLevel::Medium),
            "mediumhigh" => Ok(TraitLevel::MediumHigh),
            "high" => Ok(TraitLevel::High),
            _ => Err(UnknownLevel(s.to_string())),
        }
    }
}

impl TryFrom<String> for TraitLevel {
    type Error = UnknownLevel;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<TraitLevel> for String {
    fn from(value: TraitLevel) -> Self {
        value.as_str().to_string()
    }
}

/// The five Big Five dimensions, in canonical O, C, E, A, N order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trait {
    Openness,
    Conscientiousness,
    Extraversion,
    Agreeableness,
    Neuroticism,
}

impl Trait {
    pub const ALL: [Trait; 5] = [
        Trait::Openness,
        Trait::Conscientiousness,
        Trait::Extraversion,
        Trait::Agreeableness,
        Trait::Neuroticism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Trait::Openness => "Openness",
            Trait::Conscientiousness => "Conscientiousness",
            Trait::Extraversion => "Extraversion",
            Trait::Agreeableness => "Agreeableness",
            Trait::Neuroticism => "Neuroticism",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Trait::Openness => "openness",
            Trait::Conscientiousness => "conscientiousness",
            Trait::Extraversion => "extraversion",
            Trait::Agreeableness => "agreeableness",
            Trait::Neuroticism => "neuroticism",
        }
    }

    pub fn from_key(key: &str) -> Option<Trait> {
        Self::ALL
            .into_iter()
            .find(|t| t.key().eq_ignore_ascii_case(key) || t.name().eq_ignore_ascii_case(key))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BigFive {
    pub openness: TraitLevel,
    pub conscientiousness: TraitLevel,
    pub extraversion: TraitLevel,
    pub agreeableness: TraitLevel,
    pub neuroticism: TraitLevel,
}

impl BigFive {
    pub fn uniform(level: TraitLevel) -> Self {
        BigFive {
            openness: level,
            conscientiousness: level,
            extraversion: level,
            agreeableness: level,
            neuroticism: level,
        }
    }

    pub fn get(&self, t: Trait) -> TraitLevel {
        match t {
            Trait::Openness => self.openness,
            Trait::Conscientiousness => self.conscientiousness,
            Trait::Extraversion => self.extraversion,
            Trait::Agreeableness => self.agreeableness,
            Trait::Neuroticism => self.neuroticism,
        }
    }

    pub fn set(&mut self, t: Trait, level: TraitLevel) {
        match t {
            Trait::Openness => self.openness = level,
            Trait::Conscientiousness => self.conscientiousness = level,
            Trait::Extraversion => self.extraversion = level,
            Trait::Agreeableness => self.agreeableness = level,
            Trait::Neuroticism => self.neuroticism = level,
        }
    }
}

/// Free-text personality tag: non-empty, trimmed, no line breaks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Descriptor(String);

impl Descriptor {
    pub fn new(text: impl Into<String>) -> Result<Self, PersonaError> {
        let text = text.into();
        if text.is_empty() || text.trim() != text || text.contains(['\n', '\r']) {
            return Err(PersonaError::InvalidDescriptor(text));
        }
        Ok(Descriptor(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Descriptor {
    type Error = PersonaError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Descriptor::new(value)
    }
}

impl From<Descriptor> for String {
    fn from(value: Descriptor) -> Self {
        value.0
    }
}

/// Build a descriptor list from string literals. Panics on invalid tags, so
/// only use it with known-good constants.
pub fn descriptors(tags: &[&str]) -> Vec<Descriptor> {
    tags.iter()
        .map(|t| Descriptor::new(*t).expect("valid descriptor literal"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Parametric,
    Descriptive,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonalityProfile {
    pub traits: BigFive,
    #[serde(default)]
    pub descriptors: Vec<Descriptor>,
    pub provenance: Provenance,
}

impl PersonalityProfile {
    pub fn from_parameters(traits: BigFive, descriptors: Vec<Descriptor>) -> Self {
        PersonalityProfile {
            traits,
            descriptors,
            provenance: Provenance::Parametric,
        }
    }

    /// Infer trait levels from a free-text description with one backend
    /// round trip (re-prompted on malformed output up to `retry_budget`).
    /// The original description is kept as the profile's only descriptor.
    pub fn from_description(
        text: &str,
        backend: &dyn CompletionBackend,
        retry_budget: u32,
    ) -> Result<Self, PersonaError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(PersonaError::EmptyDescription);
        }
        let descriptor = Descriptor::new(trimmed.replace(['\n', '\r'], " "))?;
        let bundle = PromptBundle::assemble(
            Stage::DescribePersona,
            trimmed,
            None,
            &[trimmed.to_string()],
            None,
        );
        let outcome =
            llm::complete_structured(backend, retry_budget, &bundle, |payload| match payload {
                StructuredPayload::Persona(levels) => Ok(levels),
                other => Err(format!("expected persona payload, got {:?}", other.stage())),
            })?;
        Ok(PersonalityProfile {
            traits: outcome.value,
            descriptors: vec![descriptor],
            provenance: Provenance::Descriptive,
        })
    }

    /// Draw each trait independently and uniformly from the five levels.
    ///
    /// The stream is ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`),
    /// one `random_range(0..5)` draw per trait in O, C, E, A, N order.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut traits = BigFive::uniform(TraitLevel::Medium);
        for t in Trait::ALL {
            traits.set(t, TraitLevel::ALL[rng.random_range(0..5)]);
        }
        PersonalityProfile {
            traits,
            descriptors: Vec::new(),
            provenance: Provenance::Random,
        }
    }

    pub fn level(&self, t: Trait) -> TraitLevel {
        self.traits.get(t)
    }

    pub fn numeric(&self, t: Trait) -> f64 {
        self.traits.get(t).numeric()
    }

    /// Canonical prompt block. Field order and wording are fixed; commas and
    /// backslashes inside descriptors are escaped so distinct descriptor
    /// lists never render identically.
    pub fn render(&self) -> String {
        let mut out = String::from("Personality (Big Five):\n");
        for t in Trait::ALL {
            out.push_str(t.name());
            out.push_str(": ");
            out.push_str(self.level(t).as_str());
            out.push('\n');
        }
        out.push_str("Descriptors: ");
        if self.descriptors.is_empty() {
            out.push_str("(none)");
        } else {
            let escaped: Vec<String> = self
                .descriptors
                .iter()
                .map(|d| d.as_str().replace('\\', "\\\\").replace(',', "\\,"))
                .collect();
            out.push('[');
            out.push_str(&escaped.join(", "));
            out.push(']');
        }
        out.push('\n');
        out
    }

    pub fn adam() -> Self {
        Self::from_parameters(
            BigFive {
                openness: TraitLevel::Low,
                conscientiousness: TraitLevel::High,
                extraversion: TraitLevel::MediumLow,
                agreeableness: TraitLevel::MediumHigh,
                neuroticism: TraitLevel::MediumLow,
            },
            descriptors(&["Calm", "Structured", "Efficient"]),
        )
    }

    pub fn bella() -> Self {
        Self::from_parameters(
            BigFive {
                openness: TraitLevel::Medium,
                conscientiousness: TraitLevel::MediumHigh,
                extraversion: TraitLevel::Medium,
                agreeableness: TraitLevel::High,
                neuroticism: TraitLevel::MediumHigh,
            },
            descriptors(&["Empathetic", "Thoughtful", "Warm"]),
        )
    }

    pub fn caleb() -> Self {
        Self::from_parameters(
            BigFive {
                openness: TraitLevel::High,
                conscientiousness: TraitLevel::MediumLow,
                extraversion: TraitLevel::High,
                agreeableness: TraitLevel::MediumLow,
                neuroticism: TraitLevel::MediumLow,
            },
            descriptors(&["Mean", "Humorous", "Caring"]),
        )
    }
}

/// Free-function form of [`PersonalityProfile::render`].
pub fn render_persona_text(profile: &PersonalityProfile) -> String {
    profile.render()
}

/// Parse the trait lines of a rendered persona block back into levels.
/// Missing lines yield `None`.
pub fn parse_persona_levels(block: &str) -> Option<BigFive> {
    let mut traits = BigFive::uniform(TraitLevel::Medium);
    let mut seen = 0;
    for line in block.lines() {
        let Some((name, value)) = line.split_once(':') else {
            continue;
        };
        let Some(t) = Trait::from_key(name.trim()) else {
            continue;
        };
        if let Ok(level) = value.trim().parse() {
            traits.set(t, level);
            seen += 1;
        }
    }
    (seen == 5).then_some(traits)
}
