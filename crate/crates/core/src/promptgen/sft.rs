use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{serialize_example, PromptError, PromptExample, PromptOptions};
use crate::jsonl::{self, JsonlError};
use crate::outparse::render_completion;
use crate::psychometrics::TraitProfile;
use crate::scenario::{Bank, ResponseRecord, ScenarioSplit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftMeta {
    pub participant: String,
    pub scenario: String,
    pub split: String,
    pub question_ids: Vec<String>,
    pub trait_count: usize,
    pub template_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// One prompt/completion pair. `answer_spans` are `[start, end)` character
/// offsets of each option number inside `completion`; the trainer maps them
/// to tokens and scales their loss by `answer_weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub prompt: String,
    pub completion: String,
    pub answer_spans: Vec<[usize; 2]>,
    pub answer_weight: f64,
    pub meta: SftMeta,
}

#[derive(Debug, thiserror::Error)]
pub enum SftError {
    #[error("{participant}/{scenario}: no ground truth for {qid}")]
    MissingTruth {
        participant: String,
        scenario: String,
        qid: String,
    },
    #[error("{participant}/{scenario}: {qid} option {option} outside 1..={count}")]
    OptionRange {
        participant: String,
        scenario: String,
        qid: String,
        option: u32,
        count: u32,
    },
    #[error("answer weight must be finite and >= 1, got {0}")]
    Weight(f64),
    #[error("participant {0} has no profile")]
    MissingProfile(String),
    #[error("scenario {0} not in bank")]
    MissingScenario(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

pub fn build_sft_record(
    example: &PromptExample,
    truth: &BTreeMap<String, u32>,
    rationale: Option<&BTreeMap<String, String>>,
    weight: f64,
    split_tag: &str,
) -> Result<SftRecord, SftError> {
    if !(weight.is_finite() && weight >= 1.0) {
        return Err(SftError::Weight(weight));
    }
    let mut ordered = Vec::with_capacity(example.question_ids.len());
    for (qid, &count) in example.question_ids.iter().zip(&example.option_counts) {
        let option = *truth.get(qid).ok_or_else(|| SftError::MissingTruth {
            participant: example.participant_id.clone(),
            scenario: example.scenario_id.clone(),
            qid: qid.clone(),
        })?;
        if option == 0 || option > count {
            return Err(SftError::OptionRange {
                participant: example.participant_id.clone(),
                scenario: example.scenario_id.clone(),
                qid: qid.clone(),
                option,
                count,
            });
        }
        ordered.push((qid.clone(), option));
    }
    let completion = render_completion(&ordered, rationale);
    let answer_spans = answer_spans(&completion, &ordered);
    Ok(SftRecord {
        prompt: example.text.clone(),
        completion,
        answer_spans,
        answer_weight: weight,
        meta: SftMeta {
            participant: example.participant_id.clone(),
            scenario: example.scenario_id.clone(),
            split: split_tag.to_string(),
            question_ids: example.question_ids.clone(),
            trait_count: example.trait_count,
            template_version: example.template_version.clone(),
            config_hash: None,
        },
    })
}

// Predictions come first in both completion forms, so a forward scan finds
// each `"qid": n` in order.
fn answer_spans(completion: &str, ordered: &[(String, u32)]) -> Vec<[usize; 2]> {
    let mut spans = Vec::with_capacity(ordered.len());
    let mut cursor = 0;
    for (qid, option) in ordered {
        let key = format!(
            "{}: ",
            serde_json::to_string(qid).expect("strings serialize")
        );
        let at = cursor
            + completion[cursor..]
                .find(&key)
                .expect("rendered key present");
        let start = at + key.len();
        let end = start + option.to_string().len();
        let to_chars = |b: usize| completion[..b].chars().count();
        spans.push([to_chars(start), to_chars(end)]);
        cursor = end;
    }
    spans
}

/// One record per observed (participant, training scenario) pair, with all
/// of the scenario's multiple-choice questions.
pub fn build_training_set(
    records: &[ResponseRecord],
    profiles: &BTreeMap<String, TraitProfile>,
    bank: &Bank,
    split: &ScenarioSplit,
    trait_count: usize,
    weight: f64,
    opts: PromptOptions,
) -> Result<Vec<SftRecord>, SftError> {
    let mut out = Vec::new();
    for r in crate::scenario::train_records(records, split) {
        let profile = profiles
            .get(&r.participant_id)
            .ok_or_else(|| SftError::MissingProfile(r.participant_id.clone()))?;
        let scenario = bank
            .get(&r.scenario_id)
            .ok_or_else(|| SftError::MissingScenario(r.scenario_id.clone()))?;
        let qids: Vec<String> = scenario.target_questions().map(|q| q.id.clone()).collect();
        let example = serialize_example(
            profile,
            scenario,
            &r.context_answers,
            &qids,
            trait_count,
            opts,
        )?;
        out.push(build_sft_record(&example, &r.truth, None, weight, "train")?);
    }
    Ok(out)
}

pub fn export_jsonl(records: &[SftRecord], path: &Path) -> Result<usize, SftError> {
    Ok(jsonl::write_jsonl(path, None, records)?)
}

pub fn read_sft_jsonl(path: &Path) -> Result<Vec<SftRecord>, SftError> {
    Ok(jsonl::read_jsonl(path, None)?)
}
