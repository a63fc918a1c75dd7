//! Load the kitchen action space, validate a few hand-written selections and
//! show the fallback when a backend keeps proposing impossible actions.

use std::collections::BTreeMap;

use robochar::action::{self, validate_selection, ActionSelection, SelectionContext};
use robochar::appraisal::{AppraisalRecord, EmotionState, HumanInput};
use robochar::llm::ScriptedBackend;
use robochar::persona::PersonalityProfile;

fn selection(action: &str, bindings: &[(&str, &str)]) -> ActionSelection {
    ActionSelection {
        action_id: action.into(),
        bindings: bindings
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect::<BTreeMap<_, _>>(),
        utterance: String::new(),
        rationale: String::new(),
    }
}

fn main() {
    let space = action::default_kitchen_space();
    println!("{}\n", space.render());

    for s in [
        selection("brew_drink", &[("drink", "tea")]),
        selection("brew_drink", &[]),
        selection("fetch_ingredient", &[("object", "unicorn")]),
        selection("perform_motion", &[("motion", "moonwalk")]),
        selection("fly", &[]),
    ] {
        match validate_selection(&s, &space) {
            Ok(()) => println!("ok       {}", s.call_text()),
            Err(v) => println!(
                "rejected {}: {}",
                s.call_text(),
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join("; ")
            ),
        }
    }

    let input = HumanInput::new("Can you help?", &[], 1);
    let appraisal = AppraisalRecord {
        relevance: 0.6,
        valence: 0.0,
        impact: 0.2,
        inferred_intent: "asks for help".into(),
        rationale: String::new(),
    };
    let profile = PersonalityProfile::adam();
    let emotion = EmotionState::neutral();
    let ctx = SelectionContext {
        input: &input,
        appraisal: &appraisal,
        emotion: &emotion,
        profile: &profile,
        memory_texts: None,
        space: &space,
        emotion_enabled: true,
    };
    let stubborn = ScriptedBackend::new(vec![
        Ok(r#"{"action":"fly","utterance":"Wheee"}"#.into());
        3
    ]);
    let out = action::select_action(&ctx, &stubborn, 2).unwrap();
    println!(
        "\nafter {} rejected answers: {} \"{}\" ({})",
        out.attempts,
        out.selection.call_text(),
        out.selection.utterance,
        out.fallback_reason.unwrap_or_default()
    );
}
