//! Data files shipped under `data/v1/`, embedded at compile time so the
//! binary and the tests never depend on the working directory.

pub const LEXICON_JSON: &str = include_str!("../data/v1/lexicon.json");
pub const MOCK_RULES_JSON: &str = include_str!("../data/v1/mock_rules.json");
pub const KITCHEN_SPACE_JSON: &str = include_str!("../data/v1/spaces/kitchen.json");
pub const ELLA_ARC_JSON: &str = include_str!("../data/v1/scripts/ella_arc.json");

pub const ADAM_CONFIG_JSON: &str = include_str!("../data/v1/configs/adam.json");
pub const BELLA_CONFIG_JSON: &str = include_str!("../data/v1/configs/bella.json");
pub const CALEB_CONFIG_JSON: &str = include_str!("../data/v1/configs/caleb.json");
pub const CALEB_NO_MEMORY_CONFIG_JSON: &str =
    include_str!("../data/v1/configs/caleb_no_memory.json");
pub const CALEB_NO_EMOTION_CONFIG_JSON: &str =
    include_str!("../data/v1/configs/caleb_no_emotion.json");

/// Absolute path of the shipped data directory in the source tree.
pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join("v1")
}

/// Shipped action space documents by id.
pub fn shipped_space_json(id: &str) -> Option<&'static str> {
    match id {
        "kitchen" => Some(KITCHEN_SPACE_JSON),
        _ => None,
    }
}
