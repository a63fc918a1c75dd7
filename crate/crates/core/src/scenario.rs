//! Scripted interaction scenarios and cross-config comparison reports.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::validate_selection;
use crate::appraisal::{EmotionState, HumanInput, Reaction};
use crate::engine::{self, AgentConfig, Transcript, TurnResult};
use crate::llm::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptTurn {
    pub day: u32,
    #[serde(default)]
    pub slot: String,
    #[serde(default)]
    pub utterance: String,
    #[serde(default)]
    pub cues: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<Reaction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub schema_version: u32,
    pub id: String,
    #[serde(default)]
    pub turns: Vec<ScriptTurn>,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {column}, field `{field}`: {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl Script {
    pub fn parse(json: &str) -> Result<Script, ScriptError> {
        let de = &mut serde_json::Deserializer::from_str(json);
        let script: Script =
            serde_path_to_error::deserialize(de).map_err(|e| ScriptError::Parse {
                line: e.inner().line(),
                column: e.inner().column(),
                field: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        let invalid = |field: String, message: String| ScriptError::Invalid { field, message };
        if self.schema_version != crate::SCHEMA_VERSION {
            return Err(invalid(
                "schema_version".into(),
                format!("unsupported schema_version {}", self.schema_version),
            ));
        }
        let mut prev = 1;
        for (i, t) in self.turns.iter().enumerate() {
            if t.day < prev {
                return Err(invalid(
                    format!("turns[{i}].day"),
                    format!("day {} follows day {prev}; days must not decrease", t.day),
                ));
            }
            prev = t.day;
            self.input(i)
                .validate()
                .map_err(|e| invalid(format!("turns[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    pub fn input(&self, index: usize) -> HumanInput {
        let t = &self.turns[index];
        HumanInput {
            utterance: t.utterance.clone(),
            cues: t.cues.clone(),
            day: t.day,
            timestamp: 0,
            reaction: t.reaction.clone(),
        }
    }

    pub fn inputs(&self) -> Vec<HumanInput> {
        (0..self.turns.len()).map(|i| self.input(i)).collect()
    }

    /// The shipped four-scenario arc (days 1, 2, 2, 10).
    pub fn ella_arc() -> Script {
        Script::parse(crate::data::ELLA_ARC_JSON).expect("shipped script is valid")
    }
}

pub fn load_script(path: &Path) -> Result<Script, ScriptError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScriptError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Script::parse(&text)
}

/// One config's replay outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRun {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// sha256 of the pretty-printed transcript.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    pub turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRow {
    pub index: usize,
    pub day: u32,
    pub slot: String,
    /// `action(k=v)` per config, `None` where the config failed.
    pub selections: Vec<Option<String>>,
    pub intents: Vec<Option<String>>,
    /// Share of successful config pairs whose (action_id, bindings) differ.
    pub distinct_rate: f64,
    /// Any two configs differ in selection or inferred intent.
    pub divergent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub script_id: String,
    pub metric: String,
    pub configs: Vec<ConfigRun>,
    pub rows: Vec<TurnRow>,
    /// Mean of the per-turn distinct rates.
    pub distinct_rate: f64,
    pub assertions: Vec<Assertion>,
    #[serde(skip)]
    pub transcripts: Vec<Option<Transcript>>,
}

const METRIC: &str =
    "distinct_rate: fraction of config pairs whose (action_id, bindings) differ on a turn; \
an artifact-defined metric, utterance text is ignored";

/// Replay `script` against every config (in parallel) and compare.
/// A failing config is recorded in the report; the others still run.
pub fn run_matrix(script: &Script, configs: &[AgentConfig]) -> ComparisonReport {
    let inputs = script.inputs();
    let results: Vec<Result<Transcript, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| s.spawn(|| engine::replay(c, &inputs).map_err(|e| e.to_string())))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("replay panicked".into())))
            .collect()
    });

    let mut runs = Vec::new();
    let mut transcripts = Vec::new();
    for (config, result) in configs.iter().zip(results) {
        match result {
            Ok(t) => {
                runs.push(ConfigRun {
                    name: config.name.clone(),
                    error: None,
                    digest: Some(sha256_hex(t.to_json().as_bytes())),
                    turns: t.turns().count(),
                });
                transcripts.push(Some(t));
            }
            Err(e) => {
                runs.push(ConfigRun {
                    name: config.name.clone(),
                    error: Some(e),
                    digest: None,
                    turns: 0,
                });
                transcripts.push(None);
            }
        }
    }

    let per_config: Vec<Option<Vec<&TurnResult>>> = transcripts
        .iter()
        .map(|t| t.as_ref().map(|t| t.turns().collect()))
        .collect();
    let rows: Vec<TurnRow> = script
        .turns
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let turns: Vec<Option<&TurnResult>> = per_config
                .iter()
                .map(|c| c.as_ref().and_then(|v| v.get(i).copied()))
                .collect();
            row(i, st, &turns)
        })
        .collect();
    let distinct_rate = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.distinct_rate).sum::<f64>() / rows.len() as f64
    };

    let mut report = ComparisonReport {
        schema_version: crate::SCHEMA_VERSION,
        script_id: script.id.clone(),
        metric: METRIC.into(),
        configs: runs,
        rows,
        distinct_rate,
        assertions: Vec::new(),
        transcripts,
    };
    report.assertions = assertions(script, configs, &report);
    report
}

fn row(index: usize, st: &ScriptTurn, turns: &[Option<&TurnResult>]) -> TurnRow {
    let ok: Vec<&TurnResult> = turns.iter().flatten().copied().collect();
    let mut pairs = 0usize;
    let mut distinct = 0usize;
    let mut intents_differ = false;
    for (a, x) in ok.iter().enumerate() {
        for y in &ok[a + 1..] {
            pairs += 1;
            if (&x.selection.action_id, &x.selection.bindings)
                != (&y.selection.action_id, &y.selection.bindings)
            {
                distinct += 1;
            }
            if x.appraisal.inferred_intent != y.appraisal.inferred_intent {
                intents_differ = true;
            }
        }
    }
    TurnRow {
        index,
        day: st.day,
        slot: st.slot.clone(),
        selections: turns
            .iter()
            .map(|t| t.map(|t| t.selection.call_text()))
            .collect(),
        intents: turns
            .iter()
            .map(|t| t.map(|t| t.appraisal.inferred_intent.clone()))
            .collect(),
        distinct_rate: if pairs == 0 {
            0.0
        } else {
            distinct as f64 / pairs as f64
        },
        divergent: distinct > 0 || intents_differ,
    }
}

fn assertions(
    script: &Script,
    configs: &[AgentConfig],
    report: &ComparisonReport,
) -> Vec<Assertion> {
    let mut out = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        out.push(Assertion {
            name: name.into(),
            passed,
            detail,
        })
    };

    let failed: Vec<&str> = report
        .configs
        .iter()
        .filter(|c| c.error.is_some())
        .map(|c| c.name.as_str())
        .collect();
    push(
        "all_configs_ran",
        failed.is_empty(),
        format!("failed: {failed:?}"),
    );

    let short: Vec<&str> = report
        .configs
        .iter()
        .filter(|c| c.error.is_none() && c.turns != script.turns.len())
        .map(|c| c.name.as_str())
        .collect();
    push(
        "turn_count_matches_script",
        short.is_empty(),
        format!("{} script turns; mismatched: {short:?}", script.turns.len()),
    );

    let rates_ok = report
        .rows
        .iter()
        .all(|r| (0.0..=1.0).contains(&r.distinct_rate));
    push("rates_in_unit_interval", rates_ok, String::new());

    let mut invalid = Vec::new();
    let mut loud = Vec::new();
    let mut leaky = Vec::new();
    for (config, t) in configs.iter().zip(&report.transcripts) {
        let Some(t) = t else { continue };
        let space = crate::action::shipped_space(&config.space_id);
        for turn in t.turns() {
            if let Some(space) = &space {
                if validate_selection(&turn.selection, space).is_err() {
                    invalid.push(format!("{}:{}", config.name, turn.input.timestamp));
                }
            }
            if !config.ablation.emotion_enabled && turn.emotion != EmotionState::neutral() {
                loud.push(format!("{}:{}", config.name, turn.input.timestamp));
            }
        }
        if !config.ablation.memory_enabled && !t.final_store.is_empty() {
            leaky.push(config.name.clone());
        }
    }
    push(
        "selections_valid",
        invalid.is_empty(),
        format!("invalid: {invalid:?}"),
    );
    push(
        "emotion_off_stays_neutral",
        loud.is_empty(),
        format!("non-neutral: {loud:?}"),
    );
    push(
        "memory_off_store_empty",
        leaky.is_empty(),
        format!("non-empty stores: {leaky:?}"),
    );
    out
}

impl ComparisonReport {
    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table: one row per script turn, one column per config.
    pub fn render_table(&self) -> String {
        let mut header = vec!["#".to_string(), "day".into(), "slot".into()];
        header.extend(self.configs.iter().map(|c| c.name.clone()));
        header.push("distinct".into());
        header.push("div".into());
        let mut rows = vec![header];
        for r in &self.rows {
            let mut cells = vec![(r.index + 1).to_string(), r.day.to_string(), r.slot.clone()];
            cells.extend(
                r.selections
                    .iter()
                    .map(|s| s.clone().unwrap_or_else(|| "(failed)".into())),
            );
            cells.push(format!("{:.2}", r.distinct_rate));
            cells.push(if r.divergent {
                "*".into()
            } else {
                String::new()
            });
            rows.push(cells);
        }
        let cols = rows[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out.push_str(&format!("mean distinct rate: {:.2}\n", self.distinct_rate));
        for a in &self.assertions {
            out.push_str(&format!(
                "[{}] {}\n",
                if a.passed { "pass" } else { "FAIL" },
                a.name
            ));
        }
        out
    }
}
