//! Replay the four-scenario arc against Adam, Bella and Caleb and print the
//! comparison table.

use robochar::data;
use robochar::engine::AgentConfig;
use robochar::scenario::{run_matrix, Script};

fn main() {
    let configs: Vec<AgentConfig> = [
        data::ADAM_CONFIG_JSON,
        data::BELLA_CONFIG_JSON,
        data::CALEB_CONFIG_JSON,
    ]
    .iter()
    .map(|json| AgentConfig::from_json(json).expect("shipped config"))
    .collect();
    let script = Script::ella_arc();
    let report = run_matrix(&script, &configs);
    print!("{}", report.render_table());

    for (config, transcript) in configs.iter().zip(&report.transcripts) {
        let Some(t) = transcript else { continue };
        println!("\n{}:", config.name);
        for turn in t.turns() {
            println!(
                "  day {:>2} {:<10} {:<10} {:<34} \"{}\"",
                turn.input.day,
                turn.emotion.label.as_str(),
                format!("v={:+.2}", turn.appraisal.valence),
                turn.selection.call_text(),
                turn.selection.utterance
            );
        }
    }
}
