//! The three ways to build a personality: explicit trait levels, a free-text
//! description read by the backend, and a seeded random draw.

use robochar::llm::MockBackend;
use robochar::persona::{descriptors, BigFive, PersonalityProfile, TraitLevel};

fn main() {
    let explicit = PersonalityProfile::from_parameters(
        BigFive {
            openness: TraitLevel::Low,
            conscientiousness: TraitLevel::High,
            extraversion: TraitLevel::MediumLow,
            agreeableness: TraitLevel::MediumHigh,
            neuroticism: TraitLevel::MediumLow,
        },
        descriptors(&["Calm", "Structured", "Efficient"]),
    );
    println!("-- parametric\n{}\n", explicit.render());

    let backend = MockBackend::new(7);
    let described = PersonalityProfile::from_description(
        "A curious and outgoing companion willing to explore and engage in interactions.",
        &backend,
        2,
    )
    .expect("mock reads the description");
    println!("-- descriptive\n{}\n", described.render());

    for seed in [1, 2] {
        println!(
            "-- random (seed {seed})\n{}\n",
            PersonalityProfile::random(seed).render()
        );
    }
}
