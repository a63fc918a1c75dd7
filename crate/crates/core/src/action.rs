//! Declared action spaces and constrained action selection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appraisal::{AppraisalRecord, EmotionState, HumanInput};
use crate::llm::mock::{
    APPRAISAL, CUE, EMOTION, EMOTIONAL_PROCESSING, INTENT, INVENTORY, UTTERANCE,
};
use crate::llm::{
    self, BackendError, CompletionBackend, LlmError, PromptBundle, Stage, StructuredPayload,
};
use crate::persona::PersonalityProfile;

/// Id of the mandatory parameterless fallback action.
pub const SPEAK_ONLY: &str = "speak_only";
pub const FALLBACK_UTTERANCE: &str =
    "Sorry, I'm not sure how to help with that right now, but I'm here.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    Object,
    Motion,
    Drink,
    FreeText,
}

impl ParameterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParameterKind::Object => "object",
            ParameterKind::Motion => "motion",
            ParameterKind::Drink => "drink",
            ParameterKind::FreeText => "free_text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParameterKind,
    /// Closed set of allowed values; empty means any value the kind allows.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub parameters: Vec<ParameterSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requires_objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpace {
    pub schema_version: u32,
    pub id: String,
    pub actions: Vec<ActionSpec>,
    #[serde(default)]
    pub inventory: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported schema_version {0}")]
    SchemaVersion(u32),
    #[error("space has no `speak_only` action without parameters")]
    MissingFallback,
    #[error("duplicate action id `{0}`")]
    DuplicateAction(String),
    #[error("action `{action}` declares parameter `{param}` twice")]
    DuplicateParameter { action: String, param: String },
    #[error("action id must be a non-empty token, got {0:?}")]
    BadId(String),
}

impl ActionSpace {
    pub fn from_json(json: &str) -> Result<ActionSpace, SpaceError> {
        let de = &mut serde_json::Deserializer::from_str(json);
        let space: ActionSpace =
            serde_path_to_error::deserialize(de).map_err(|e| SpaceError::Parse {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        if self.schema_version != crate::SCHEMA_VERSION {
            return Err(SpaceError::SchemaVersion(self.schema_version));
        }
        let mut ids = BTreeSet::new();
        for a in &self.actions {
            if a.id.is_empty() || a.id.contains(char::is_whitespace) {
                return Err(SpaceError::BadId(a.id.clone()));
            }
            if !ids.insert(a.id.as_str()) {
                return Err(SpaceError::DuplicateAction(a.id.clone()));
            }
            let mut names = BTreeSet::new();
            for p in &a.parameters {
                if !names.insert(p.name.as_str()) {
                    return Err(SpaceError::DuplicateParameter {
                        action: a.id.clone(),
                        param: p.name.clone(),
                    });
                }
            }
        }
        match self.action(SPEAK_ONLY) {
            Some(a) if a.parameters.is_empty() => Ok(()),
            _ => Err(SpaceError::MissingFallback),
        }
    }

    pub fn action(&self, id: &str) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.id == id)
    }

    pub fn has_object(&self, object: &str) -> bool {
        self.inventory.iter().any(|o| o == object)
    }

    /// Prompt rendering: one `- id(param: kind[choices]) requires [..]: description`
    /// line per action, then the inventory line.
    pub fn render(&self) -> String {
        let mut out = String::from("Action space:\n");
        for a in &self.actions {
            let params: Vec<String> = a
                .parameters
                .iter()
                .map(|p| {
                    if p.choices.is_empty() {
                        format!("{}: {}", p.name, p.kind.as_str())
                    } else {
                        format!("{}: {}[{}]", p.name, p.kind.as_str(), p.choices.join("|"))
                    }
                })
                .collect();
            out.push_str(&format!("- {}({})", a.id, params.join(", ")));
            if !a.requires_objects.is_empty() {
                out.push_str(&format!(" requires [{}]", a.requires_objects.join(", ")));
            }
            out.push_str(&format!(": {}\n", a.description));
        }
        out.push_str(INVENTORY);
        out.push_str(&self.inventory.join(", "));
        out
    }
}

/// The kitchen-assistant space shipped in `data/v1/spaces/kitchen.json`.
pub fn default_kitchen_space() -> ActionSpace {
    ActionSpace::from_json(crate::data::KITCHEN_SPACE_JSON).expect("shipped kitchen space is valid")
}

/// Look up a shipped space by id.
pub fn shipped_space(id: &str) -> Option<ActionSpace> {
    crate::data::shipped_space_json(id)
        .map(|j| ActionSpace::from_json(j).expect("shipped space is valid"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSelection {
    pub action_id: String,
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
    pub utterance: String,
    #[serde(default)]
    pub rationale: String,
}

impl ActionSelection {
    pub fn speak_only(utterance: &str, rationale: &str) -> Self {
        ActionSelection {
            action_id: SPEAK_ONLY.into(),
            bindings: BTreeMap::new(),
            utterance: utterance.into(),
            rationale: rationale.into(),
        }
    }

    pub fn is_speech_only(&self) -> bool {
        self.action_id == SPEAK_ONLY
    }

    /// `id(k=v, ...)`
    pub fn call_text(&self) -> String {
        let args: Vec<String> = self
            .bindings
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("{}({})", self.action_id, args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnknownAction { action: String },
    UnboundParameter { param: String },
    UnexpectedParameter { param: String },
    UnknownObject { param: String, value: String },
    InvalidChoice { param: String, value: String },
    EmptyValue { param: String },
    MissingRequiredObject { object: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownAction { action } => write!(f, "unknown action `{action}`"),
            Violation::UnboundParameter { param } => write!(f, "unbound parameter `{param}`"),
            Violation::UnexpectedParameter { param } => {
                write!(f, "parameter `{param}` is not declared for this action")
            }
            Violation::UnknownObject { param, value } => {
                write!(f, "`{param}` = `{value}` is not in the inventory")
            }
            Violation::InvalidChoice { param, value } => {
                write!(
                    f,
                    "`{param}` = `{value}` is not one of the declared choices"
                )
            }
            Violation::EmptyValue { param } => write!(f, "`{param}` is empty"),
            Violation::MissingRequiredObject { object } => {
                write!(f, "required object `{object}` is not in the inventory")
            }
        }
    }
}

/// Check `selection` against `space`, collecting every violation.
pub fn validate_selection(
    selection: &ActionSelection,
    space: &ActionSpace,
) -> Result<(), Vec<Violation>> {
    let Some(spec) = space.action(&selection.action_id) else {
        return Err(vec![Violation::UnknownAction {
            action: selection.action_id.clone(),
        }]);
    };
    let mut violations = Vec::new();
    for p in &spec.parameters {
        let Some(value) = selection.bindings.get(&p.name) else {
            violations.push(Violation::UnboundParameter {
                param: p.name.clone(),
            });
            continue;
        };
        if value.trim().is_empty() {
            violations.push(Violation::EmptyValue {
                param: p.name.clone(),
            });
            continue;
        }
        if !p.choices.is_empty() && !p.choices.contains(value) {
            violations.push(Violation::InvalidChoice {
                param: p.name.clone(),
                value: value.clone(),
            });
        }
        if matches!(p.kind, ParameterKind::Object | ParameterKind::Drink)
            && !space.has_object(value)
        {
            violations.push(Violation::UnknownObject {
                param: p.name.clone(),
                value: value.clone(),
            });
        }
    }
    for k in selection.bindings.keys() {
        if !spec.parameters.iter().any(|p| &p.name == k) {
            violations.push(Violation::UnexpectedParameter { param: k.clone() });
        }
    }
    for o in &spec.requires_objects {
        if !space.has_object(o) {
            violations.push(Violation::MissingRequiredObject { object: o.clone() });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Everything the select stage conditions on.
pub struct SelectionContext<'a> {
    pub input: &'a HumanInput,
    pub appraisal: &'a AppraisalRecord,
    pub emotion: &'a EmotionState,
    pub profile: &'a PersonalityProfile,
    pub memory_texts: Option<&'a [String]>,
    pub space: &'a ActionSpace,
    pub emotion_enabled: bool,
}

pub fn selection_bundle(ctx: &SelectionContext<'_>) -> PromptBundle {
    let mut lines = vec![format!(
        "{UTTERANCE}{}",
        ctx.input.utterance.replace(['\n', '\r'], " ")
    )];
    if ctx.emotion_enabled {
        lines.extend(ctx.input.cues.iter().map(|c| format!("{CUE}{c}")));
    }
    let a = ctx.appraisal;
    let task = format!(
        "{APPRAISAL}relevance={:.2} valence={:.2} impact={:.2}\n{INTENT}{}\n{EMOTION}{}\n{EMOTIONAL_PROCESSING}{}\n{}",
        a.relevance,
        a.valence,
        a.impact,
        a.inferred_intent.replace(['\n', '\r'], " "),
        ctx.emotion.summary(),
        if ctx.emotion_enabled { "enabled" } else { "disabled" },
        ctx.space.render(),
    );
    PromptBundle::assemble(
        Stage::SelectAction,
        &ctx.profile.render(),
        ctx.memory_texts,
        &lines,
        Some(&task),
    )
}

#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub selection: ActionSelection,
    /// Backend calls made (at most retry_budget + 1).
    pub attempts: u32,
    pub prompt_hash: String,
    pub response_hash: Option<String>,
    /// Set when every attempt was rejected and the speak_only fallback was used.
    pub fallback_reason: Option<String>,
}

/// Ask the backend for an action in `ctx.space`, re-prompting with the
/// violations on invalid answers. After `retry_budget + 1` rejected answers
/// the result degrades to [`SPEAK_ONLY`]; only backend errors fail.
pub fn select_action(
    ctx: &SelectionContext<'_>,
    backend: &dyn CompletionBackend,
    retry_budget: u32,
) -> Result<SelectionOutcome, BackendError> {
    let bundle = selection_bundle(ctx);
    let result = llm::complete_structured(backend, retry_budget, &bundle, |p| match p {
        StructuredPayload::Selection(s) => match validate_selection(&s, ctx.space) {
            Ok(()) => Ok(s),
            Err(v) => Err(v
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("; ")),
        },
        other => Err(format!("expected selection payload, got {}", other.stage())),
    });
    match result {
        Ok(out) => Ok(SelectionOutcome {
            selection: out.value,
            attempts: out.attempts,
            prompt_hash: out.prompt_hash,
            response_hash: Some(out.response_hash),
            fallback_reason: None,
        }),
        Err(LlmError::Backend(e)) => Err(e),
        Err(LlmError::Parse { error, attempts }) => Ok(SelectionOutcome {
            selection: ActionSelection::speak_only(
                FALLBACK_UTTERANCE,
                &format!("fallback: {}", error.constraint),
            ),
            attempts,
            prompt_hash: bundle.hash(),
            response_hash: None,
            fallback_reason: Some(error.constraint),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appraisal::{derive_emotion, EmotionLabel};
    use crate::llm::{MockBackend, ScriptedBackend};

    fn sel(action: &str, bindings: &[(&str, &str)]) -> ActionSelection {
        ActionSelection {
            action_id: action.into(),
            bindings: bindings
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            utterance: "hi".into(),
            rationale: String::new(),
        }
    }

    #[test]
    fn kitchen_space_contents() {
        let space = default_kitchen_space();
        for id in [
            "brew_drink",
            "fetch_ingredient",
            "pick_place",
            "perform_motion",
            "speak_only",
        ] {
            assert!(space.action(id).is_some(), "{id}");
        }
        for o in [
            "tea",
            "steak",
            "energy_bar",
            "flower",
            "ice_cream",
            "snacks",
            "sparkling_juice",
        ] {
            assert!(space.has_object(o), "{o}");
        }
    }

    #[test]
    fn space_round_trips() {
        let space = default_kitchen_space();
        let json = serde_json::to_string(&space).unwrap();
        assert_eq!(ActionSpace::from_json(&json).unwrap(), space);
    }

    #[test]
    fn space_requires_fallback() {
        let mut space = default_kitchen_space();
        space.actions.retain(|a| a.id != SPEAK_ONLY);
        assert!(matches!(space.validate(), Err(SpaceError::MissingFallback)));
        let json = serde_json::to_string(&space).unwrap();
        assert!(ActionSpace::from_json(&json).is_err());
    }

    #[test]
    fn space_parse_errors_carry_path() {
        let bad = r#"{"schema_version":1,"id":"k","actions":[{"id":"x","name":"X","parameters":[{"name":"a","kind":"laser"}]}]}"#;
        let err = ActionSpace::from_json(bad).unwrap_err().to_string();
        assert!(err.contains("actions[0].parameters[0].kind"), "{err}");
    }

    #[test]
    fn validation_examples() {
        let space = default_kitchen_space();
        assert!(validate_selection(&sel("speak_only", &[]), &space).is_ok());
        assert_eq!(
            validate_selection(&sel("brew_drink", &[]), &space).unwrap_err(),
            vec![Violation::UnboundParameter {
                param: "drink".into()
            }]
        );
        assert_eq!(
            validate_selection(&sel("fetch_ingredient", &[("object", "unicorn")]), &space)
                .unwrap_err(),
            vec![Violation::UnknownObject {
                param: "object".into(),
                value: "unicorn".into()
            }]
        );
        assert!(matches!(
            validate_selection(&sel("fly", &[]), &space).unwrap_err()[..],
            [Violation::UnknownAction { .. }]
        ));
    }

    #[test]
    fn validation_reports_every_violation() {
        let space = default_kitchen_space();
        let v = validate_selection(
            &sel(
                "perform_motion",
                &[("motion", "backflip"), ("speed", "fast")],
            ),
            &space,
        )
        .unwrap_err();
        assert_eq!(v.len(), 2);
        let mut no_kettle = space.clone();
        no_kettle.inventory.retain(|o| o != "kettle");
        let v = validate_selection(&sel("brew_drink", &[("drink", "unicorn")]), &no_kettle)
            .unwrap_err();
        assert_eq!(v.len(), 2);
    }

    fn scenario_ctx<'a>(
        input: &'a HumanInput,
        appraisal: &'a AppraisalRecord,
        emotion: &'a EmotionState,
        profile: &'a PersonalityProfile,
        space: &'a ActionSpace,
    ) -> SelectionContext<'a> {
        SelectionContext {
            input,
            appraisal,
            emotion,
            profile,
            memory_texts: None,
            space,
            emotion_enabled: true,
        }
    }

    #[test]
    fn bella_offers_a_flower_in_scenario_one() {
        let space = default_kitchen_space();
        let bella = PersonalityProfile::bella();
        let input = HumanInput::new(
            "It's just too much to review for the fluids final. Why is Mike giving us such a hard time?",
            &["looks concerned and stressed"],
            1,
        );
        let appraisal = AppraisalRecord {
            relevance: 0.8,
            valence: -0.4,
            impact: 0.52,
            inferred_intent: "stressed about the upcoming fluids final exam".into(),
            rationale: String::new(),
        };
        let emotion = derive_emotion(&appraisal, &bella, &EmotionState::neutral(), true);
        assert_eq!(emotion.label, EmotionLabel::Empathy);
        let out = select_action(
            &scenario_ctx(&input, &appraisal, &emotion, &bella, &space),
            &MockBackend::default(),
            2,
        )
        .unwrap();
        assert_eq!(out.selection.call_text(), "pick_place(object=flower)");
        assert!(!out.selection.utterance.is_empty());
        assert_eq!(out.attempts, 1);
    }

    #[test]
    fn caleb_twirls_in_scenario_four() {
        let space = default_kitchen_space();
        let caleb = PersonalityProfile::caleb();
        let input = HumanInput::new(
            "You won't believe this, Mike curved me!",
            &["yells with excitement"],
            10,
        );
        let appraisal = AppraisalRecord {
            relevance: 1.0,
            valence: 0.7,
            impact: 0.76,
            inferred_intent: "the user's exam was curved".into(),
            rationale: String::new(),
        };
        let emotion = derive_emotion(&appraisal, &caleb, &EmotionState::neutral(), true);
        let out = select_action(
            &scenario_ctx(&input, &appraisal, &emotion, &caleb, &space),
            &MockBackend::default(),
            2,
        )
        .unwrap();
        assert_eq!(
            out.selection.call_text(),
            "perform_motion(motion=dance_twirl)"
        );
    }

    #[test]
    fn unknown_action_falls_back_after_budget() {
        let space = default_kitchen_space();
        let fly = r#"{"action":"fly","bindings":{},"utterance":"whee"}"#;
        let scripted = ScriptedBackend::new(vec![Ok(fly.into()); 3]);
        let input = HumanInput::new("hi", &[], 1);
        let appraisal = AppraisalRecord {
            relevance: 0.5,
            valence: 0.0,
            impact: 0.2,
            inferred_intent: String::new(),
            rationale: String::new(),
        };
        let emotion = EmotionState::neutral();
        let profile = PersonalityProfile::adam();
        let out = select_action(
            &scenario_ctx(&input, &appraisal, &emotion, &profile, &space),
            &scripted,
            2,
        )
        .unwrap();
        assert_eq!(out.selection.action_id, SPEAK_ONLY);
        assert_eq!(out.attempts, 3);
        assert_eq!(scripted.calls(), 3);
        assert!(out
            .fallback_reason
            .unwrap()
            .contains("unknown action `fly`"));
    }

    #[test]
    fn mock_respects_custom_space() {
        // A space without pick_place: Bella's flower rule is skipped and the
        // next applicable rule answers.
        let mut space = default_kitchen_space();
        space.actions.retain(|a| a.id != "pick_place");
        let bella = PersonalityProfile::bella();
        let input = HumanInput::new(
            "Why is Mike giving us such a hard time?",
            &["looks concerned"],
            1,
        );
        let appraisal = AppraisalRecord {
            relevance: 0.8,
            valence: -0.4,
            impact: 0.52,
            inferred_intent: "frustrated".into(),
            rationale: String::new(),
        };
        let emotion = derive_emotion(&appraisal, &bella, &EmotionState::neutral(), true);
        let out = select_action(
            &scenario_ctx(&input, &appraisal, &emotion, &bella, &space),
            &MockBackend::default(),
            0,
        )
        .unwrap();
        assert!(validate_selection(&out.selection, &space).is_ok());
        assert!(out.fallback_reason.is_none());
    }
}
