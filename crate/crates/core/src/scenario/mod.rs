//! Scenario bank, response records, the held-out scenario split and the
//! participant x scenario coverage matrix.

mod bank;
mod coverage;
mod records;
mod split;

use serde::{Deserialize, Serialize};

#[cfg(test)]
pub(crate) use bank::tests as bank_tests;
pub use bank::{Bank, BankError, BankIssue};
pub use coverage::{coverage, CoverageError, CoverageMatrix};
pub use records::{
    load_records, save_records, ContextAnswer, RecordError, ResponseRecord, RECORDS_KIND,
};
pub use split::{
    eval_records, repeated_splits, split_scenarios, train_records, EvalLeak, ScenarioSplit,
    SplitError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioType {
    /// Day-to-day events from the last 12 months.
    #[serde(rename = "DTD")]
    Dtd,
    /// Retrospective major life events.
    #[serde(rename = "Retro")]
    Retro,
    #[serde(rename = "Hypo", alias = "Hypothetical")]
    Hypo,
}

impl ScenarioType {
    /// Token used on the `SCENARIO_TYPE:` prompt line.
    pub fn token(self) -> &'static str {
        match self {
            ScenarioType::Dtd => "DTD",
            ScenarioType::Retro => "Retro",
            ScenarioType::Hypo => "Hypo",
        }
    }

    pub const ALL: [ScenarioType; 3] = [ScenarioType::Dtd, ScenarioType::Retro, ScenarioType::Hypo];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    TrustDynamics,
    ConflictResolution,
    PowerInfluence,
    RiskDecision,
    IntegrityCompliance,
    StrategicAdaptation,
}

impl Domain {
    pub const ALL: [Domain; 6] = [
        Domain::TrustDynamics,
        Domain::ConflictResolution,
        Domain::PowerInfluence,
        Domain::RiskDecision,
        Domain::IntegrityCompliance,
        Domain::StrategicAdaptation,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionFormat {
    MultipleChoice,
    #[serde(rename = "likert_1_5")]
    Likert1To5,
    OpenText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionItem {
    /// 1-based.
    pub index: u32,
    pub text: String,
    /// Behavioral class shared across scenarios (e.g. "escalate"). When
    /// absent the option index is the class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl OptionItem {
    pub fn class_label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("option_{}", self.index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub format: QuestionFormat,
    #[serde(default)]
    pub options: Vec<OptionItem>,
}

impl Question {
    pub fn option_count(&self) -> u32 {
        self.options.len() as u32
    }

    /// Only multiple-choice questions are prediction targets.
    pub fn is_target(&self) -> bool {
        self.format == QuestionFormat::MultipleChoice
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub scenario_type: ScenarioType,
    pub domain: Domain,
    pub narrative: String,
    #[serde(default)]
    pub context_questions: Vec<String>,
    pub prediction_questions: Vec<Question>,
}

impl Scenario {
    pub fn question(&self, qid: &str) -> Option<&Question> {
        self.prediction_questions.iter().find(|q| q.id == qid)
    }

    pub fn target_questions(&self) -> impl Iterator<Item = &Question> {
        self.prediction_questions.iter().filter(|q| q.is_target())
    }
}
