//! Deterministic offline backend: a rule table plus the sentiment lexicon.
//!
//! The mock reads the same rendered sections a real model would see and
//! answers with schema-conforming JSON. Decisions (levels, valences,
//! intents, actions, insights) depend only on the bundle; the seed picks
//! among a rule's utterance variants via `sha256(seed_le || rendered)`.
//! Rules ship in `data/v1/mock_rules.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::backend::{BackendError, CompletionBackend};
use super::lexicon::{Lexicon, LexiconScore};
use super::prompt::{PromptBundle, SectionTag, NO_MEMORIES};
use super::Stage;
use crate::persona::{parse_persona_levels, BigFive, Trait, TraitLevel};
use crate::text::{contains_ci, tokenize};

// Line prefixes shared between the stage prompt builders and the mock.
pub(crate) const UTTERANCE: &str = "Utterance: ";
pub(crate) const CUE: &str = "Cue: ";
pub(crate) const MODE: &str = "Mode: ";
pub(crate) const APPRAISAL: &str = "Appraisal: ";
pub(crate) const INTENT: &str = "Intent: ";
pub(crate) const EMOTION: &str = "Emotion: ";
pub(crate) const EMOTIONAL_PROCESSING: &str = "Emotional processing: ";
pub(crate) const INVENTORY: &str = "Inventory: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRules {
    pub version: u32,
    pub persona_keywords: Vec<PersonaKeyword>,
    pub appraisal: AppraisalRules,
    pub actions: Vec<ActionRule>,
    pub reflection: ReflectionRules,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaKeyword {
    pub keyword: String,
    #[serde(rename = "trait")]
    pub trait_key: String,
    pub level: TraitLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppraisalRules {
    pub conflict_magnitude: f64,
    pub intents: Vec<IntentRule>,
    pub literal_intents: Vec<IntentRule>,
    pub literal_default_intent: String,
    pub literal_relevance: f64,
    pub task_words: Vec<String>,
    pub task_relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentRule {
    pub name: String,
    #[serde(default)]
    pub utterance_any: Vec<String>,
    #[serde(default)]
    pub memory_any: Vec<String>,
    #[serde(default)]
    pub cue_conflict: Option<bool>,
    pub intent: String,
    #[serde(default)]
    pub valence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRule {
    pub name: String,
    pub when: ActionWhen,
    pub action: String,
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
    pub utterances: Vec<String>,
    pub rationale: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionWhen {
    #[serde(default)]
    pub emotion_enabled: Option<bool>,
    #[serde(default)]
    pub traits: BTreeMap<String, TraitRange>,
    #[serde(default)]
    pub valence: Option<ValenceSign>,
    #[serde(default)]
    pub utterance_any: Vec<String>,
    #[serde(default)]
    pub intent_any: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraitRange {
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValenceSign {
    Negative,
    Zero,
    Positive,
}

impl ValenceSign {
    fn of(v: f64) -> ValenceSign {
        if v < 0.0 {
            ValenceSign::Negative
        } else if v > 0.0 {
            ValenceSign::Positive
        } else {
            ValenceSign::Zero
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionRules {
    pub positive_reaction: f64,
    pub negative_reaction: f64,
    pub min_support: usize,
    pub patterns: Vec<ReflectionPattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionPattern {
    pub name: String,
    pub actions: Vec<String>,
    pub statement: String,
    pub negative_statement: String,
}

impl MockRules {
    pub fn from_json(json: &str) -> Result<MockRules, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn shipped() -> Arc<MockRules> {
        static SHIPPED: OnceLock<Arc<MockRules>> = OnceLock::new();
        SHIPPED
            .get_or_init(|| {
                Arc::new(
                    MockRules::from_json(crate::data::MOCK_RULES_JSON)
                        .expect("shipped rules parse"),
                )
            })
            .clone()
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    rules: Arc<MockRules>,
    lexicon: Arc<Lexicon>,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend::new(0)
    }
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend {
            seed,
            rules: MockRules::shipped(),
            lexicon: Arc::new(Lexicon::shipped().clone()),
        }
    }

    pub fn with_tables(seed: u64, rules: MockRules, lexicon: Lexicon) -> Self {
        MockBackend {
            seed,
            rules: Arc::new(rules),
            lexicon: Arc::new(lexicon),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn pick<'a>(&self, bundle: &PromptBundle, options: &'a [String]) -> &'a str {
        if options.is_empty() {
            return "";
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(bundle.render().as_bytes());
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        let ix = u64::from_le_bytes(word) % options.len() as u64;
        &options[ix as usize]
    }

    fn describe(&self, bundle: &PromptBundle) -> String {
        let tokens: BTreeSet<String> = tokenize(bundle.section(SectionTag::HumanInput))
            .into_iter()
            .collect();
        let mut levels = BigFive::uniform(TraitLevel::Medium);
        for kw in &self.rules.persona_keywords {
            if tokens.contains(&kw.keyword.to_lowercase()) {
                if let Some(t) = Trait::from_key(&kw.trait_key) {
                    levels.set(t, kw.level);
                }
            }
        }
        let mut obj = serde_json::Map::new();
        for t in Trait::ALL {
            obj.insert(t.key().into(), levels.get(t).as_str().into());
        }
        serde_json::Value::Object(obj).to_string()
    }

    fn appraise(&self, bundle: &PromptBundle) -> String {
        let input = bundle.section(SectionTag::HumanInput);
        let utterance = line_value(input, UTTERANCE).unwrap_or_default();
        let cues: Vec<&str> = line_values(input, CUE);
        let memory = memory_text(bundle);
        let literal = line_value(bundle.section(SectionTag::Task), MODE) == Some("literal");
        let rules = &self.rules.appraisal;

        let words = self.lexicon.score(utterance);
        if literal {
            let valence = round2(words.valence());
            let relevance = if tokenize(utterance)
                .iter()
                .any(|t| rules.task_words.iter().any(|w| w == t))
            {
                rules.task_relevance
            } else {
                rules.literal_relevance
            };
            let intent = first_intent(&rules.literal_intents, utterance, memory, false)
                .map(|r| r.intent.clone())
                .unwrap_or_else(|| rules.literal_default_intent.clone());
            return json!({
                "relevance": relevance,
                "valence": valence,
                "impact": round2((0.1 + 0.5 * valence.abs()).min(1.0)),
                "inferred_intent": intent,
                "rationale": format!("literal reading; word score {:.2} over {} matches", words.valence(), words.matches),
            })
            .to_string();
        }

        let cue_score = cues.iter().fold(LexiconScore::default(), |acc, c| {
            acc.combine(self.lexicon.score(c))
        });
        let (wv, cv) = (words.valence(), cue_score.valence());
        let conflict = words.matches > 0
            && cue_score.matches > 0
            && wv != 0.0
            && cv != 0.0
            && wv.signum() != cv.signum();
        let mut valence = if conflict {
            cv.signum() * rules.conflict_magnitude
        } else {
            words.combine(cue_score).valence()
        };
        let mut intent = match ValenceSign::of(valence) {
            ValenceSign::Negative => "expresses a negative feeling".to_string(),
            ValenceSign::Positive => "shares something positive".to_string(),
            ValenceSign::Zero => "makes a neutral remark".to_string(),
        };
        if let Some(rule) = first_intent(&rules.intents, utterance, memory, conflict) {
            intent = rule.intent.clone();
            if let Some(v) = rule.valence {
                valence = v;
            }
        }
        let valence = round2(valence.clamp(-1.0, 1.0));
        let mut relevance: f64 = 0.4;
        if !cues.is_empty() {
            relevance += 0.2;
        }
        if !memory.is_empty() {
            relevance += 0.2;
        }
        if words.matches + cue_score.matches > 0 {
            relevance += 0.2;
        }
        let rationale = if conflict {
            format!("words score {wv:.2} but cues score {cv:.2}; the cues win")
        } else {
            format!("words score {wv:.2}, cues score {cv:.2}")
        };
        json!({
            "relevance": round2(relevance.min(1.0)),
            "valence": valence,
            "impact": round2((0.2 + 0.8 * valence.abs()).min(1.0)),
            "inferred_intent": intent,
            "rationale": rationale,
        })
        .to_string()
    }

    fn select(&self, bundle: &PromptBundle) -> String {
        let traits = parse_persona_levels(bundle.section(SectionTag::Persona))
            .unwrap_or(BigFive::uniform(TraitLevel::Medium));
        let utterance =
            line_value(bundle.section(SectionTag::HumanInput), UTTERANCE).unwrap_or_default();
        let task = bundle.section(SectionTag::Task);
        let emotion_enabled = line_value(task, EMOTIONAL_PROCESSING) != Some("disabled");
        let intent = line_value(task, INTENT).unwrap_or_default();
        let valence = line_value(task, APPRAISAL)
            .and_then(|l| key_number(l, "valence"))
            .unwrap_or(0.0);
        let declared = declared_actions(task);
        let inventory: BTreeSet<&str> = line_value(task, INVENTORY)
            .map(|l| {
                l.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default();

        let matches = |w: &ActionWhen| -> bool {
            w.emotion_enabled.is_none_or(|e| e == emotion_enabled)
                && w.valence.is_none_or(|s| s == ValenceSign::of(valence))
                && w.traits.iter().all(|(k, r)| {
                    let Some(t) = Trait::from_key(k) else {
                        return false;
                    };
                    let x = traits.get(t).numeric();
                    r.min.is_none_or(|m| x >= m) && r.max.is_none_or(|m| x <= m)
                })
                && (w.utterance_any.is_empty()
                    || w.utterance_any.iter().any(|p| contains_ci(utterance, p)))
                && (w.intent_any.is_empty() || w.intent_any.iter().any(|p| contains_ci(intent, p)))
        };
        // Skip rules the active space cannot honor, so custom spaces still
        // get a valid answer from the first applicable rule.
        let feasible = |r: &ActionRule| -> bool {
            (declared.is_empty() || declared.contains(r.action.as_str()))
                && r.bindings.iter().all(|(k, v)| {
                    k == "motion" || inventory.is_empty() || inventory.contains(v.as_str())
                })
        };
        match self
            .rules
            .actions
            .iter()
            .find(|r| matches(&r.when) && feasible(r))
        {
            Some(rule) => json!({
                "action": rule.action,
                "bindings": rule.bindings,
                "utterance": self.pick(bundle, &rule.utterances),
                "rationale": format!("{} [{}]", rule.rationale, rule.name),
            })
            .to_string(),
            None => json!({
                "action": "speak_only",
                "bindings": {},
                "utterance": "I'm here.",
                "rationale": "no rule applied",
            })
            .to_string(),
        }
    }

    fn reflect(&self, bundle: &PromptBundle) -> String {
        let rules = &self.rules.reflection;
        let known = memory_text(bundle);
        let episodes: Vec<(usize, String, f64)> = bundle
            .section(SectionTag::HumanInput)
            .lines()
            .filter_map(parse_episode_line)
            .collect();
        let mut items = Vec::new();
        for p in &rules.patterns {
            let pick = |keep: &dyn Fn(f64) -> bool| -> Vec<usize> {
                episodes
                    .iter()
                    .filter(|(_, a, r)| p.actions.contains(a) && keep(*r))
                    .map(|(i, _, _)| *i)
                    .collect()
            };
            let positive = pick(&|r| r >= rules.positive_reaction);
            let negative = pick(&|r| r <= rules.negative_reaction);
            for (support, statement) in
                [(positive, &p.statement), (negative, &p.negative_statement)]
            {
                if support.len() >= rules.min_support && !known.contains(statement.as_str()) {
                    let confidence = round2((0.5 + 0.15 * support.len() as f64).min(1.0));
                    items.push(json!({
                        "statement": statement,
                        "supporting": support,
                        "confidence": confidence,
                    }));
                }
            }
        }
        json!({ "memories": items }).to_string()
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, BackendError> {
        Ok(match bundle.stage {
            Stage::DescribePersona => self.describe(bundle),
            Stage::Appraise => self.appraise(bundle),
            Stage::SelectAction => self.select(bundle),
            Stage::Reflect => self.reflect(bundle),
        })
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn line_value<'a>(section: &'a str, prefix: &str) -> Option<&'a str> {
    section
        .lines()
        .find_map(|l| l.strip_prefix(prefix))
        .map(str::trim)
}

fn line_values<'a>(section: &'a str, prefix: &str) -> Vec<&'a str> {
    section
        .lines()
        .filter_map(|l| l.strip_prefix(prefix))
        .map(str::trim)
        .collect()
}

fn memory_text(bundle: &PromptBundle) -> &str {
    let m = bundle.section(SectionTag::MemoryContext);
    if m == NO_MEMORIES {
        ""
    } else {
        m
    }
}

fn first_intent<'a>(
    rules: &'a [IntentRule],
    utterance: &str,
    memory: &str,
    conflict: bool,
) -> Option<&'a IntentRule> {
    rules.iter().find(|r| {
        (r.utterance_any.is_empty() || r.utterance_any.iter().any(|p| contains_ci(utterance, p)))
            && (r.memory_any.is_empty() || r.memory_any.iter().any(|p| contains_ci(memory, p)))
            && r.cue_conflict.is_none_or(|c| c == conflict)
    })
}

/// `key=value` lookup inside a space-separated line.
fn key_number(line: &str, key: &str) -> Option<f64> {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
}

/// Action ids from `- id(...)` lines of the rendered space.
fn declared_actions(task: &str) -> BTreeSet<&str> {
    task.lines()
        .filter_map(|l| l.strip_prefix("- "))
        .filter_map(|l| l.split_once('(').map(|(id, _)| id.trim()))
        .collect()
}

/// `[i] day=D action=A human_valence=H reaction_valence=R :: text`
fn parse_episode_line(line: &str) -> Option<(usize, String, f64)> {
    let rest = line.strip_prefix('[')?;
    let (ix, rest) = rest.split_once(']')?;
    let head = rest.split(" :: ").next()?;
    let action = head
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("action="))?
        .to_string();
    Some((
        ix.trim().parse().ok()?,
        action,
        key_number(head, "reaction_valence")?,
    ))
}
