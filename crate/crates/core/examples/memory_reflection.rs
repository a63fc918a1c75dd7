//! A day of playful turns that land well, then the end-of-day reflection
//! that turns them into a semantic memory.

use robochar::appraisal::HumanInput;
use robochar::engine::{AgentConfig, Session};
use robochar::memory::RetrievalQuery;
use robochar::persona::PersonalityProfile;

fn main() {
    let mut session = Session::new(AgentConfig::new("caleb", PersonalityProfile::caleb())).unwrap();
    let day_one = [
        ("I'm so stressed about the lab report.", "laughs out loud"),
        ("I'm so tired of this semester.", "giggles and smiles"),
        (
            "Professor Lee is giving us a hard time.",
            "laughs and claps",
        ),
    ];
    for (said, reaction) in day_one {
        let input = HumanInput::new(said, &["looks down"], 1).with_reaction("", &[reaction]);
        let turn = session.step(input).unwrap();
        println!(
            "{:<42} -> {:<36} reaction {:+.2}",
            said,
            turn.selection.call_text(),
            session
                .store()
                .episode(turn.episode_id.as_deref().unwrap())
                .unwrap()
                .reaction_valence
        );
    }

    let report = session.end_day().unwrap();
    println!(
        "\nreflection over {} episodes of day {}:",
        report.episodes_considered, report.day
    );
    for m in &report.memories {
        println!(
            "  {} [{:.2}] {} <- {:?}",
            m.id, m.confidence, m.statement, m.supporting_episodes
        );
    }

    println!("\nretrieval on day 2 for \"feeling down again\":");
    for r in robochar::memory::retrieve(
        session.store(),
        &RetrievalQuery::new("feeling down again", 2, 3),
    ) {
        println!(
            "  {:.3} (rec {:.3} imp {:.3} rel {:.3}) {}",
            r.score, r.recency, r.importance, r.relevance, r.text
        );
    }
}
