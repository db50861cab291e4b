use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bank, QuestionFormat};
use crate::jsonl::{self, Header, JsonlError};

pub const RECORDS_KIND: &str = "response_records";

/// A context question with the participant's background answer. The answer
/// may be absent for follow-up questions that were shown but not answered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextAnswer {
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

/// One participant's answers to one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub participant_id: String,
    pub scenario_id: String,
    #[serde(default)]
    pub context_answers: Vec<ContextAnswer>,
    /// Multiple-choice ground truth: question id -> 1-based option.
    pub truth: BTreeMap<String, u32>,
    /// Likert ratings, stored but never used as targets.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ratings: BTreeMap<String, u32>,
    /// Open-text answers, stored verbatim but never used as targets.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub open_text: BTreeMap<String, String>,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("record {index} ({participant}/{scenario}): unknown scenario")]
    UnknownScenario {
        index: usize,
        participant: String,
        scenario: String,
    },
    #[error("record {index} ({participant}/{scenario}): {qid:?} is not a multiple-choice prediction question")]
    UnknownQuestion {
        index: usize,
        participant: String,
        scenario: String,
        qid: String,
    },
    #[error(
        "record {index} ({participant}/{scenario}): {qid} option {option} outside 1..={count}"
    )]
    OptionRange {
        index: usize,
        participant: String,
        scenario: String,
        qid: String,
        option: u32,
        count: u32,
    },
    #[error("record {index} ({participant}/{scenario}): {qid:?} is not a {format:?} question")]
    WrongFormat {
        index: usize,
        participant: String,
        scenario: String,
        qid: String,
        format: QuestionFormat,
    },
}

impl ResponseRecord {
    pub fn validate(&self, index: usize, bank: &Bank) -> Result<(), RecordError> {
        let scenario = bank
            .get(&self.scenario_id)
            .ok_or_else(|| RecordError::UnknownScenario {
                index,
                participant: self.participant_id.clone(),
                scenario: self.scenario_id.clone(),
            })?;
        for (qid, &option) in &self.truth {
            let q = scenario
                .question(qid)
                .filter(|q| q.is_target())
                .ok_or_else(|| RecordError::UnknownQuestion {
                    index,
                    participant: self.participant_id.clone(),
                    scenario: self.scenario_id.clone(),
                    qid: qid.clone(),
                })?;
            if option == 0 || option > q.option_count() {
                return Err(RecordError::OptionRange {
                    index,
                    participant: self.participant_id.clone(),
                    scenario: self.scenario_id.clone(),
                    qid: qid.clone(),
                    option,
                    count: q.option_count(),
                });
            }
        }
        let wrong = |qid: &String, format| RecordError::WrongFormat {
            index,
            participant: self.participant_id.clone(),
            scenario: self.scenario_id.clone(),
            qid: qid.clone(),
            format,
        };
        for (qid, &rating) in &self.ratings {
            match scenario.question(qid) {
                Some(q) if q.format == QuestionFormat::Likert1To5 && (1..=5).contains(&rating) => {}
                _ => return Err(wrong(qid, QuestionFormat::Likert1To5)),
            }
        }
        for qid in self.open_text.keys() {
            match scenario.question(qid) {
                Some(q) if q.format == QuestionFormat::OpenText => {}
                _ => return Err(wrong(qid, QuestionFormat::OpenText)),
            }
        }
        Ok(())
    }
}

pub fn save_records(path: &Path, records: &[ResponseRecord]) -> Result<usize, RecordError> {
    Ok(jsonl::write_jsonl(
        path,
        Some(&Header::new(RECORDS_KIND)),
        records,
    )?)
}

/// Load and validate records against the bank.
pub fn load_records(path: &Path, bank: &Bank) -> Result<Vec<ResponseRecord>, RecordError> {
    let records: Vec<ResponseRecord> = jsonl::read_jsonl(path, Some(RECORDS_KIND))?;
    for (i, r) in records.iter().enumerate() {
        r.validate(i, bank)?;
    }
    Ok(records)
}
