//! Caleb with and without memory on the four-scenario arc. Without memory
//! the Day 10 "Mike curved me!" loses its exam context.

use robochar::data;
use robochar::engine::{replay, AgentConfig};
use robochar::scenario::{run_matrix, Script};

fn main() {
    let script = Script::ella_arc();
    let configs = [
        AgentConfig::from_json(data::CALEB_CONFIG_JSON).unwrap(),
        AgentConfig::from_json(data::CALEB_NO_MEMORY_CONFIG_JSON).unwrap(),
        AgentConfig::from_json(data::CALEB_NO_EMOTION_CONFIG_JSON).unwrap(),
    ];
    print!("{}", run_matrix(&script, &configs).render_table());

    println!();
    for c in &configs {
        let t = replay(c, &script.inputs()).unwrap();
        let last = t.turns().last().unwrap();
        println!("{}:", c.name);
        println!("  retrieved {} memories", last.retrieved.len());
        println!("  intent: {}", last.appraisal.inferred_intent);
        println!("  emotion: {}", last.emotion.summary());
        println!(
            "  {} \"{}\"",
            last.selection.call_text(),
            last.selection.utterance
        );
        println!(
            "  store after the run: {} episodic, {} semantic",
            t.final_store.episodic.len(),
            t.final_store.semantic.len()
        );
    }
}
