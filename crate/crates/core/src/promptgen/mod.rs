//! Deterministic prompt serialization and SFT record export.
//!
//! The layout is documented in `config/prompt_template_v1.md`. Rendering is
//! unwrapped unless a wrap width is given; wrapping is greedy first-fit on
//! word boundaries and never splits words.

mod sft;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::psychometrics::TraitProfile;
use crate::scenario::{ContextAnswer, Scenario};

pub use sft::{
    build_sft_record, build_training_set, export_jsonl, read_sft_jsonl, SftError, SftMeta,
    SftRecord,
};

pub const TEMPLATE_VERSION: &str = "1";

pub const TASK_LINES: [&str; 2] = [
    "Predict the participant's immediate answer for EACH question below.",
    "Return ONLY a single-line JSON object mapping question_id -> option_number.",
];

/// Shipped description of the prompt layout.
pub const TEMPLATE_DOC: &str = include_str!("../../config/prompt_template_v1.md");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Wrap every logical line to this many columns.
    #[serde(default)]
    pub wrap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptExample {
    pub text: String,
    pub participant_id: String,
    pub scenario_id: String,
    pub question_ids: Vec<String>,
    /// Option count per question, aligned with `question_ids`.
    pub option_counts: Vec<u32>,
    pub trait_count: usize,
    pub template_version: String,
}

impl PromptExample {
    pub fn expected(&self) -> crate::outparse::Expected {
        self.question_ids
            .iter()
            .cloned()
            .zip(self.option_counts.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("participant {participant}: trait_count {requested} exceeds the {available} traits in the profile")]
    TraitCount {
        participant: String,
        requested: usize,
        available: usize,
    },
    #[error("scenario {scenario}: no prediction question {qid:?}")]
    UnknownQuestion { scenario: String, qid: String },
    #[error("scenario {scenario}: question {qid:?} is not multiple-choice")]
    NotATarget { scenario: String, qid: String },
    #[error("scenario {scenario}: empty question list")]
    NoQuestions { scenario: String },
}

/// Two decimals, with negative zero printed as "0.00".
pub fn format_z(z: f64) -> String {
    let s = format!("{z:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

pub fn serialize_example(
    profile: &TraitProfile,
    scenario: &Scenario,
    context: &[ContextAnswer],
    question_ids: &[String],
    trait_count: usize,
    opts: PromptOptions,
) -> Result<PromptExample, PromptError> {
    if trait_count > profile.traits.len() {
        return Err(PromptError::TraitCount {
            participant: profile.participant_id.clone(),
            requested: trait_count,
            available: profile.traits.len(),
        });
    }
    if question_ids.is_empty() {
        return Err(PromptError::NoQuestions {
            scenario: scenario.id.clone(),
        });
    }
    let mut questions = Vec::with_capacity(question_ids.len());
    for qid in question_ids {
        let q = scenario
            .question(qid)
            .ok_or_else(|| PromptError::UnknownQuestion {
                scenario: scenario.id.clone(),
                qid: qid.clone(),
            })?;
        if !q.is_target() {
            return Err(PromptError::NotATarget {
                scenario: scenario.id.clone(),
                qid: qid.clone(),
            });
        }
        questions.push(q);
    }

    let mut lines: Vec<String> = Vec::new();
    lines.push(format!("SCENARIO_TYPE: {}", scenario.scenario_type.token()));
    lines.push("PARTICIPANT_PROFILE:".into());
    lines.push(format!(" - age: {:.1}", profile.age));
    lines.push(format!(" - sex: {}", profile.sex));
    lines.push(" - traits (Z-scores):".into());
    for t in &profile.traits[..trait_count] {
        let z = t.z.map(format_z).unwrap_or_else(|| "n/a".into());
        lines.push(format!(" - {}: {} ({})", t.trait_id, z, t.bin));
    }
    lines.push("SCENARIO:".into());
    lines.push(scenario.narrative.trim().to_string());
    if !context.is_empty() {
        lines.push("CONTEXT:".into());
        for c in context {
            match &c.answer {
                Some(a) => lines.push(format!("Q: {} A: {}", c.question.trim(), a.trim())),
                None => lines.push(format!("Q: {}", c.question.trim())),
            }
        }
    }
    lines.push("TASK:".into());
    lines.extend(TASK_LINES.iter().map(|s| s.to_string()));
    lines.push("QUESTIONS:".into());
    for q in &questions {
        lines.push(format!("{}:", q.id));
        lines.push(q.text.trim().to_string());
        lines.push("OPTIONS:".into());
        for o in &q.options {
            lines.push(format!("{}: {}", o.index, o.text.trim()));
        }
    }

    let mut text = String::new();
    for line in &lines {
        // normalize any embedded line endings so output is byte-stable
        let line = line.replace("\r\n", "\n").replace('\r', "\n");
        for logical in line.split('\n') {
            match opts.wrap {
                Some(w) if logical.chars().count() > w => {
                    for piece in wrap_line(logical, w) {
                        let _ = writeln!(text, "{piece}");
                    }
                }
                _ => {
                    let _ = writeln!(text, "{logical}");
                }
            }
        }
    }

    Ok(PromptExample {
        text,
        participant_id: profile.participant_id.clone(),
        scenario_id: scenario.id.clone(),
        question_ids: questions.iter().map(|q| q.id.clone()).collect(),
        option_counts: questions.iter().map(|q| q.option_count()).collect(),
        trait_count,
        template_version: TEMPLATE_VERSION.to_string(),
    })
}

fn wrap_line(line: &str, width: usize) -> Vec<String> {
    let opts = textwrap::Options::new(width)
        .wrap_algorithm(textwrap::WrapAlgorithm::FirstFit)
        .word_splitter(textwrap::WordSplitter::NoHyphenation)
        .break_words(false);
    textwrap::wrap(line, opts)
        .into_iter()
        .map(|c| c.into_owned())
        .collect()
}
