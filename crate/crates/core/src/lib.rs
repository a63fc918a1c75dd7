//! Runtime for LLM-driven robot characters.
//!
//! A character is a Big Five [`persona::PersonalityProfile`] plus a
//! [`memory::MemoryStore`]. Each human turn flows through a fixed pipeline
//! owned by an [`engine::Session`]:
//!
//! ```text
//! retrieve memories -> appraise input -> derive emotion -> select action -> log episode
//! ```
//!
//! and at the end of each day the session reflects over its episodes to
//! distill semantic memories. Every LLM call goes through a
//! [`llm::CompletionBackend`]; the bundled [`llm::MockBackend`] is a
//! deterministic rule table plus sentiment lexicon, so whole scenario runs are
//! reproducible byte for byte.
//!
//! The `examples/` directory holds one runnable program per capability:
//!
//! ```bash
//! cargo run -p robochar --example persona_init
//! cargo run -p robochar --example memory_reflection
//! cargo run -p robochar --example appraisal_ablation
//! cargo run -p robochar --example action_space
//! cargo run -p robochar --example persona_matrix
//! cargo run -p robochar --example memory_ablation
//! cargo run -p robochar --example http_backend
//! cargo run -p robochar --example embedded_server
//! ```

pub mod action;
pub mod appraisal;
pub mod data;
pub mod engine;
pub mod llm;
pub mod memory;
pub mod persona;
pub mod scenario;
pub mod server;
pub mod text;

/// Version stamped into every persisted document.
pub const SCHEMA_VERSION: u32 = 1;

pub use action::{ActionSelection, ActionSpace, ActionSpec};
pub use appraisal::{AppraisalRecord, EmotionLabel, EmotionState, HumanInput};
pub use engine::{AgentConfig, Session, TurnResult};
pub use llm::{BackendConfig, CompletionBackend, MockBackend};
pub use memory::{EpisodicRecord, MemoryStore, SemanticMemory};
pub use persona::{PersonalityProfile, TraitLevel};
