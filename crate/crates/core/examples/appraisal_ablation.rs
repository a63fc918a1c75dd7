//! The sarcastic "That went so well." read with and without emotional
//! processing: cues are only visible when it is on.

use robochar::appraisal::{appraisal_bundle, appraise, derive_emotion, EmotionState, HumanInput};
use robochar::llm::MockBackend;
use robochar::persona::PersonalityProfile;

fn main() {
    let caleb = PersonalityProfile::caleb();
    let backend = MockBackend::new(7);
    let input = HumanInput::new(
        "That went so well.",
        &["looks concerned", "speaks in a dry and flat voice"],
        2,
    );
    let memories = vec!["Day 1: human \"It's just too much to review for the fluids final.\" (read as: stressed about the upcoming fluids final exam)".to_string()];

    for enabled in [true, false] {
        let bundle = appraisal_bundle(&input, &caleb.render(), Some(&memories), enabled);
        let out = appraise(&input, &caleb, Some(&memories), enabled, &backend, 2).unwrap();
        let emotion = derive_emotion(&out.value, &caleb, &EmotionState::neutral(), enabled);
        println!(
            "emotional processing {}",
            if enabled { "on" } else { "off" }
        );
        println!(
            "  cue line in prompt: {}",
            bundle.render().contains("dry and flat voice")
        );
        println!(
            "  valence {:+.2} impact {:.2}: {}",
            out.value.valence, out.value.impact, out.value.inferred_intent
        );
        println!("  emotion: {}\n", emotion.summary());
    }
}
