use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Stage;

/// Body of the memory section when nothing was retrieved (or memory is
/// ablated), so prompt diffs localize to this one section.
pub const NO_MEMORIES: &str = "(no memories available)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionTag {
    Persona,
    MemoryContext,
    HumanInput,
    Task,
    OutputSchema,
}

impl SectionTag {
    pub const ORDER: [SectionTag; 5] = [
        SectionTag::Persona,
        SectionTag::MemoryContext,
        SectionTag::HumanInput,
        SectionTag::Task,
        SectionTag::OutputSchema,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SectionTag::Persona => "persona",
            SectionTag::MemoryContext => "memory_context",
            SectionTag::HumanInput => "human_input",
            SectionTag::Task => "task",
            SectionTag::OutputSchema => "output_schema",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub tag: SectionTag,
    pub body: String,
}

/// A prompt split into tagged sections in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub stage: Stage,
    pub sections: Vec<Section>,
}

impl PromptBundle {
    /// Assemble the five canonical sections for `stage`.
    ///
    /// `memory_texts` are numbered in the order given (callers pass them in
    /// rank order); an empty slice renders [`NO_MEMORIES`]. `input_texts`
    /// become one line each of the human_input section. `task_context` is
    /// appended to the stage's fixed instruction (the select_action stage
    /// puts the appraisal summary and rendered action space there).
    pub fn assemble(
        stage: Stage,
        persona_text: &str,
        memory_texts: Option<&[String]>,
        input_texts: &[String],
        task_context: Option<&str>,
    ) -> PromptBundle {
        let memory = match memory_texts {
            Some(texts) if !texts.is_empty() => texts
                .iter()
                .enumerate()
                .map(|(i, t)| format!("{}. {}", i + 1, single_line(t)))
                .collect::<Vec<_>>()
                .join("\n"),
            _ => NO_MEMORIES.to_string(),
        };
        let mut task = stage_instruction(stage).to_string();
        if let Some(extra) = task_context {
            task.push('\n');
            task.push_str(extra.trim_end());
        }
        let persona = if persona_text.trim().is_empty() {
            "(not provided)".to_string()
        } else {
            persona_text.trim_end().to_string()
        };
        PromptBundle {
            stage,
            sections: vec![
                Section {
                    tag: SectionTag::Persona,
                    body: persona,
                },
                Section {
                    tag: SectionTag::MemoryContext,
                    body: memory,
                },
                Section {
                    tag: SectionTag::HumanInput,
                    body: input_texts.join("\n"),
                },
                Section {
                    tag: SectionTag::Task,
                    body: task,
                },
                Section {
                    tag: SectionTag::OutputSchema,
                    body: output_schema(stage).to_string(),
                },
            ],
        }
    }

    pub fn section(&self, tag: SectionTag) -> &str {
        self.sections
            .iter()
            .find(|s| s.tag == tag)
            .map(|s| s.body.as_str())
            .unwrap_or("")
    }

    /// Copy of this bundle with a rejection note appended to the task, used
    /// when re-prompting after malformed output.
    pub fn with_feedback(&self, note: &str) -> PromptBundle {
        let mut next = self.clone();
        if let Some(task) = next.sections.iter_mut().find(|s| s.tag == SectionTag::Task) {
            task.body.push_str("\nPrevious output rejected: ");
            task.body.push_str(&single_line(note));
        }
        next
    }

    pub fn render(&self) -> String {
        let mut out = format!("# stage: {}\n", self.stage.as_str());
        for s in &self.sections {
            out.push_str("\n## ");
            out.push_str(s.tag.as_str());
            out.push('\n');
            out.push_str(&s.body);
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.render().as_bytes())
    }

    pub fn sections_in_canonical_order(&self) -> bool {
        self.sections.iter().map(|s| s.tag).eq(SectionTag::ORDER)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn single_line(text: &str) -> String {
    text.replace(['\n', '\r'], " ")
}

fn stage_instruction(stage: Stage) -> &'static str {
    match stage {
        Stage::DescribePersona => {
            "Infer a Big Five personality from the description in human_input. \
             Assign each of openness, conscientiousness, extraversion, agreeableness and \
             neuroticism one level: Low, Medium-low, Medium, Medium-high or High."
        }
        Stage::Appraise => {
            "You are the robot described in persona. Appraise the human input in the context of \
             the retrieved memories: how relevant it is to you, how pleasant it is for the human \
             (valence), and how much it could affect the interaction (impact). State what the \
             human most likely means."
        }
        Stage::SelectAction => {
            "You are the robot described in persona. Given your appraisal and emotion, choose \
             exactly one action from the action space below, bind every parameter, and say one \
             short line in character. Only declared actions and stocked items are allowed."
        }
        Stage::Reflect => {
            "Reflect on the day's episodes listed in human_input. Extract higher-level insights \
             about the user (preferences, what comforts them) that are supported by at least one \
             episode. Cite supporting episodes by their [index]."
        }
    }
}

fn output_schema(stage: Stage) -> &'static str {
    match stage {
        Stage::DescribePersona => {
            r#"Return one JSON object: {"openness": LEVEL, "conscientiousness": LEVEL, "extraversion": LEVEL, "agreeableness": LEVEL, "neuroticism": LEVEL}"#
        }
        Stage::Appraise => {
            r#"Return one JSON object: {"relevance": number in [0,1], "valence": number in [-1,1], "impact": number in [0,1], "inferred_intent": string, "rationale": string}"#
        }
        Stage::SelectAction => {
            r#"Return one JSON object: {"action": action id, "bindings": {parameter: value}, "utterance": string, "rationale": string}"#
        }
        Stage::Reflect => {
            r#"Return one JSON object: {"memories": [{"statement": string, "supporting": [episode index, ...], "confidence": number in [0,1]}]}"#
        }
    }
}
