use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::Stage;
use crate::action::ActionSelection;
use crate::appraisal::AppraisalRecord;
use crate::persona::{BigFive, Trait, TraitLevel};

/// Schema violation in a backend answer. `constraint` names the offending
/// key and the bound or type it broke.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage} output rejected: {constraint}")]
pub struct ParseError {
    pub stage: Stage,
    pub constraint: String,
}

/// One insight proposed by the reflect stage. `supporting` holds indices
/// into the episode list shown in the prompt, not store ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionItem {
    pub statement: String,
    pub supporting: Vec<usize>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StructuredPayload {
    Persona(BigFive),
    Appraisal(AppraisalRecord),
    Selection(ActionSelection),
    Reflection(Vec<ReflectionItem>),
}

impl StructuredPayload {
    pub fn stage(&self) -> Stage {
        match self {
            StructuredPayload::Persona(_) => Stage::DescribePersona,
            StructuredPayload::Appraisal(_) => Stage::Appraise,
            StructuredPayload::Selection(_) => Stage::SelectAction,
            StructuredPayload::Reflection(_) => Stage::Reflect,
        }
    }

    /// Serialize in the wire shape the stage's output schema asks for.
    pub fn to_canonical_json(&self) -> String {
        let value = match self {
            StructuredPayload::Persona(levels) => {
                let mut obj = Map::new();
                for t in Trait::ALL {
                    obj.insert(t.key().into(), Value::String(levels.get(t).as_str().into()));
                }
                Value::Object(obj)
            }
            StructuredPayload::Appraisal(r) => json!({
                "relevance": r.relevance,
                "valence": r.valence,
                "impact": r.impact,
                "inferred_intent": r.inferred_intent,
                "rationale": r.rationale,
            }),
            StructuredPayload::Selection(s) => json!({
                "action": s.action_id,
                "bindings": s.bindings,
                "utterance": s.utterance,
                "rationale": s.rationale,
            }),
            StructuredPayload::Reflection(items) => json!({ "memories": items }),
        };
        value.to_string()
    }
}

/// Strictly parse `raw` against the schema of `stage`.
///
/// The first `{` through the last `}` is taken as the JSON object, so
/// models that wrap their answer in prose or code fences still parse.
/// Unknown keys are ignored; missing keys, wrong types and out-of-range
/// numbers are errors (numbers are never clamped).
pub fn parse_payload(stage: Stage, raw: &str) -> Result<StructuredPayload, ParseError> {
    let err = |constraint: String| ParseError { stage, constraint };
    let (start, end) = match (raw.find('{'), raw.rfind('}')) {
        (Some(s), Some(e)) if s < e => (s, e),
        _ => return Err(err("no JSON object found".into())),
    };
    let value: Value =
        serde_json::from_str(&raw[start..=end]).map_err(|e| err(format!("invalid JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(err("top-level value must be an object".into()));
    };
    let fields = Fields { obj: &obj, stage };
    match stage {
        Stage::DescribePersona => {
            let mut levels = BigFive::uniform(TraitLevel::Medium);
            for t in Trait::ALL {
                let s = fields.string(t.key())?;
                let level = s
                    .parse::<TraitLevel>()
                    .map_err(|_| err(format!("`{}`: unknown level {s:?}", t.key())))?;
                levels.set(t, level);
            }
            Ok(StructuredPayload::Persona(levels))
        }
        Stage::Appraise => Ok(StructuredPayload::Appraisal(AppraisalRecord {
            relevance: fields.number("relevance", 0.0, 1.0)?,
            valence: fields.number("valence", -1.0, 1.0)?,
            impact: fields.number("impact", 0.0, 1.0)?,
            inferred_intent: fields.string("inferred_intent")?,
            rationale: fields.optional_string("rationale")?,
        })),
        Stage::SelectAction => {
            let action_id = fields.string("action")?;
            if action_id.trim().is_empty() {
                return Err(err("`action` must be non-empty".into()));
            }
            let mut bindings = BTreeMap::new();
            match obj.get("bindings") {
                None | Some(Value::Null) => {}
                Some(Value::Object(map)) => {
                    for (k, v) in map {
                        let Value::String(s) = v else {
                            return Err(err(format!("`bindings.{k}` must be a string")));
                        };
                        bindings.insert(k.clone(), s.clone());
                    }
                }
                Some(_) => return Err(err("`bindings` must be an object".into())),
            }
            Ok(StructuredPayload::Selection(ActionSelection {
                action_id,
                bindings,
                utterance: fields.string("utterance")?,
                rationale: fields.optional_string("rationale")?,
            }))
        }
        Stage::Reflect => {
            let Some(list) = obj.get("memories") else {
                return Err(err("missing key `memories`".into()));
            };
            let Value::Array(list) = list else {
                return Err(err("`memories` must be an array".into()));
            };
            let mut items = Vec::with_capacity(list.len());
            for (i, entry) in list.iter().enumerate() {
                let Value::Object(item) = entry else {
                    return Err(err(format!("`memories[{i}]` must be an object")));
                };
                let f = Fields { obj: item, stage };
                let statement = f.string("statement").map_err(|e| prefix(e, i))?;
                if statement.trim().is_empty() {
                    return Err(err(format!("`memories[{i}].statement` must be non-empty")));
                }
                let supporting = match item.get("supporting") {
                    Some(Value::Array(ix)) if !ix.is_empty() => ix
                        .iter()
                        .map(|v| v.as_u64().map(|n| n as usize))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| {
                            err(format!(
                                "`memories[{i}].supporting` must hold non-negative integers"
                            ))
                        })?,
                    Some(Value::Array(_)) => {
                        return Err(err(format!("`memories[{i}].supporting` must be non-empty")))
                    }
                    Some(_) => {
                        return Err(err(format!("`memories[{i}].supporting` must be an array")))
                    }
                    None => return Err(err(format!("missing key `memories[{i}].supporting`"))),
                };
                let confidence = f.number("confidence", 0.0, 1.0).map_err(|e| prefix(e, i))?;
                items.push(ReflectionItem {
                    statement,
                    supporting,
                    confidence,
                });
            }
            Ok(StructuredPayload::Reflection(items))
        }
    }
}

fn prefix(mut e: ParseError, i: usize) -> ParseError {
    e.constraint = e.constraint.replacen('`', &format!("`memories[{i}]."), 1);
    e
}

struct Fields<'a> {
    obj: &'a Map<String, Value>,
    stage: Stage,
}

impl Fields<'_> {
    fn err(&self, constraint: String) -> ParseError {
        ParseError {
            stage: self.stage,
            constraint,
        }
    }

    fn number(&self, key: &str, lo: f64, hi: f64) -> Result<f64, ParseError> {
        match self.obj.get(key) {
            None => Err(self.err(format!("missing key `{key}`"))),
            Some(Value::Number(n)) => {
                let x = n
                    .as_f64()
                    .ok_or_else(|| self.err(format!("`{key}` is not a finite number")))?;
                if x < lo || x > hi {
                    Err(self.err(format!("`{key}` = {x} outside bound [{lo}, {hi}]")))
                } else {
                    Ok(x)
                }
            }
            Some(_) => Err(self.err(format!("`{key}` must be a number"))),
        }
    }

    fn string(&self, key: &str) -> Result<String, ParseError> {
        match self.obj.get(key) {
            None => Err(self.err(format!("missing key `{key}`"))),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(self.err(format!("`{key}` must be a string"))),
        }
    }

    fn optional_string(&self, key: &str) -> Result<String, ParseError> {
        match self.obj.get(key) {
            None | Some(Value::Null) => Ok(String::new()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(self.err(format!("`{key}` must be a string"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn well_formed_appraisal() {
        let raw = r#"Sure! ```json
{"relevance": 0.8, "valence": -0.6, "impact": 0.68, "inferred_intent": "sarcasm", "rationale": "tone", "extra": 1}
```"#;
        let p = parse_payload(Stage::Appraise, raw).unwrap();
        let StructuredPayload::Appraisal(r) = p else {
            panic!()
        };
        assert_eq!(r.relevance, 0.8);
        assert_eq!(r.valence, -0.6);
        assert_eq!(r.impact, 0.68);
        assert_eq!(r.inferred_intent, "sarcasm");
        assert_eq!(r.rationale, "tone");
    }

    #[test]
    fn out_of_bound_valence_names_the_bound() {
        let raw = r#"{"relevance":0.5,"valence":3.0,"impact":0.2,"inferred_intent":"x"}"#;
        let e = parse_payload(Stage::Appraise, raw).unwrap_err();
        assert!(e.constraint.contains("`valence`"), "{e}");
        assert!(e.constraint.contains("[-1, 1]"), "{e}");
    }

    #[test]
    fn missing_impact_names_the_key() {
        let raw = r#"{"relevance":0.5,"valence":0.3,"inferred_intent":"x"}"#;
        let e = parse_payload(Stage::Appraise, raw).unwrap_err();
        assert_eq!(e.constraint, "missing key `impact`");
    }

    #[test]
    fn numbers_must_be_numbers() {
        let raw = r#"{"relevance":"0.5","valence":0.3,"impact":0.1,"inferred_intent":"x"}"#;
        let e = parse_payload(Stage::Appraise, raw).unwrap_err();
        assert!(e.constraint.contains("must be a number"));
    }

    #[test]
    fn persona_levels() {
        let raw = r#"{"openness":"High","conscientiousness":"medium-low","extraversion":"Medium","agreeableness":"Low","neuroticism":"Medium high"}"#;
        let StructuredPayload::Persona(b) = parse_payload(Stage::DescribePersona, raw).unwrap()
        else {
            panic!()
        };
        assert_eq!(b.conscientiousness, TraitLevel::MediumLow);
        assert_eq!(b.neuroticism, TraitLevel::MediumHigh);
        let bad = raw.replace("\"Low\"", "\"Huge\"");
        let e = parse_payload(Stage::DescribePersona, &bad).unwrap_err();
        assert!(e.constraint.contains("agreeableness"));
    }

    #[test]
    fn selection_bindings_default_empty() {
        let raw = r#"{"action":"speak_only","utterance":"hi"}"#;
        let StructuredPayload::Selection(s) = parse_payload(Stage::SelectAction, raw).unwrap()
        else {
            panic!()
        };
        assert!(s.bindings.is_empty());
        let bad = r#"{"action":"pick_place","bindings":{"object":3},"utterance":"hi"}"#;
        assert!(parse_payload(Stage::SelectAction, bad).is_err());
    }

    #[test]
    fn reflection_requires_support() {
        let ok = r#"{"memories":[{"statement":"likes tea","supporting":[0,2],"confidence":0.8}]}"#;
        let StructuredPayload::Reflection(items) = parse_payload(Stage::Reflect, ok).unwrap()
        else {
            panic!()
        };
        assert_eq!(items[0].supporting, vec![0, 2]);
        let empty = r#"{"memories":[{"statement":"x","supporting":[],"confidence":0.8}]}"#;
        assert!(parse_payload(Stage::Reflect, empty).is_err());
        let conf = r#"{"memories":[{"statement":"x","supporting":[1],"confidence":1.5}]}"#;
        let e = parse_payload(Stage::Reflect, conf).unwrap_err();
        assert!(e.constraint.contains("memories[0].confidence"), "{e}");
        let none = r#"{"memories":[]}"#;
        assert_eq!(
            parse_payload(Stage::Reflect, none).unwrap(),
            StructuredPayload::Reflection(vec![])
        );
    }

    #[test]
    fn garbage_is_rejected() {
        for stage in Stage::ALL {
            assert!(parse_payload(stage, "").is_err());
            assert!(parse_payload(stage, "}{").is_err());
            assert!(parse_payload(stage, "[1,2]").is_err());
        }
    }

    fn arb_appraisal() -> impl Strategy<Value = AppraisalRecord> {
        (
            0.0..=1.0f64,
            -1.0..=1.0f64,
            0.0..=1.0f64,
            ".{0,20}",
            ".{0,20}",
        )
            .prop_map(|(relevance, valence, impact, inferred_intent, rationale)| {
                AppraisalRecord {
                    relevance,
                    valence,
                    impact,
                    inferred_intent,
                    rationale,
                }
            })
    }

    fn arb_selection() -> impl Strategy<Value = ActionSelection> {
        (
            "[a-z_]{1,12}",
            proptest::collection::btree_map("[a-z]{1,6}", ".{0,8}", 0..3),
            ".{0,20}",
            ".{0,20}",
        )
            .prop_map(
                |(action_id, bindings, utterance, rationale)| ActionSelection {
                    action_id,
                    bindings,
                    utterance,
                    rationale,
                },
            )
    }

    fn arb_reflection() -> impl Strategy<Value = Vec<ReflectionItem>> {
        proptest::collection::vec(
            (
                "[a-z]{1}.{0,20}",
                proptest::collection::vec(0usize..50, 1..4),
                0.0..=1.0f64,
            )
                .prop_map(|(statement, supporting, confidence)| ReflectionItem {
                    statement,
                    supporting,
                    confidence,
                }),
            0..3,
        )
    }

    proptest! {
        #[test]
        fn parse_inverts_canonical_serialize_appraisal(r in arb_appraisal()) {
            let p = StructuredPayload::Appraisal(r);
            prop_assert_eq!(parse_payload(Stage::Appraise, &p.to_canonical_json()).unwrap(), p);
        }

        #[test]
        fn parse_inverts_canonical_serialize_selection(s in arb_selection()) {
            let p = StructuredPayload::Selection(s);
            prop_assert_eq!(parse_payload(Stage::SelectAction, &p.to_canonical_json()).unwrap(), p);
        }

        #[test]
        fn parse_inverts_canonical_serialize_reflection(items in arb_reflection()) {
            let p = StructuredPayload::Reflection(items);
            prop_assert_eq!(parse_payload(Stage::Reflect, &p.to_canonical_json()).unwrap(), p);
        }

        #[test]
        fn parse_inverts_canonical_serialize_persona(ix in proptest::array::uniform5(0usize..5)) {
            let p = StructuredPayload::Persona(BigFive {
                openness: TraitLevel::ALL[ix[0]],
                conscientiousness: TraitLevel::ALL[ix[1]],
                extraversion: TraitLevel::ALL[ix[2]],
                agreeableness: TraitLevel::ALL[ix[3]],
                neuroticism: TraitLevel::ALL[ix[4]],
            });
            prop_assert_eq!(parse_payload(Stage::DescribePersona, &p.to_canonical_json()).unwrap(), p);
        }
    }
}
