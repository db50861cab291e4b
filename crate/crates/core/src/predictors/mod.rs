//! Predictor backends behind one interface: a remote chat-completion
//! endpoint, trait-blind baselines and a trainable trait-conditioned model.

mod baselines;
pub mod mock;
mod remote;
mod trait_model;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::outparse::{ParseError, PredictionSet, Repair};
use crate::promptgen::PromptExample;
use crate::psychometrics::TraitProfile;
use crate::scenario::Scenario;

pub use baselines::{Majority, UniformRandom};
pub use remote::{backoff_delay, RemoteChat, RemoteConfig, RemoteError};
pub use trait_model::{feature_dim, features, softmax_argmax};
pub use trait_model::{
    FeatureSpec, Hyper, LossTrace, ModelError, Params, TrainExample, TrainingSet, TraitLinearModel,
};

/// Everything a backend may look at for one (participant, scenario) pair.
#[derive(Debug, Clone, Copy)]
pub struct PredictionRequest<'a> {
    pub example: &'a PromptExample,
    pub profile: &'a TraitProfile,
    pub scenario: &'a Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMeta {
    pub backend: String,
    pub latency_ms: f64,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutput {
    pub set: PredictionSet,
    pub meta: PredictionMeta,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictError {
    /// The backend answered but the text did not parse. Scored as wrong.
    #[error("unparseable response: {error}")]
    Parse {
        error: ParseError,
        meta: PredictionMeta,
    },
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    fn predict(&self, req: &PredictionRequest) -> Result<PredictionOutput, PredictError>;

    /// Results are aligned with `reqs` whatever order the work completes in.
    fn predict_batch(
        &self,
        reqs: &[PredictionRequest],
    ) -> Vec<Result<PredictionOutput, PredictError>> {
        reqs.iter().map(|r| self.predict(r)).collect()
    }

    fn uses_network(&self) -> bool {
        false
    }
}

/// Backend selection as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    RemoteChat(RemoteConfig),
    UniformRandom {
        #[serde(default)]
        seed: u64,
    },
    Majority,
    TraitModel {
        #[serde(default)]
        hyper: Hyper,
        #[serde(default)]
        features: FeatureSpec,
    },
}

impl BackendConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            BackendConfig::RemoteChat(_) => "remote_chat",
            BackendConfig::UniformRandom { .. } => "uniform_random",
            BackendConfig::Majority => "majority",
            BackendConfig::TraitModel { .. } => "trait_model",
        }
    }
}

/// One line of a predictions JSONL file.
///
/// Scored lines carry `qid` and `option`. Failed lines carry `error` (an
/// outparse code) and `raw`. A line with `raw` but no `qid` is raw model
/// output that the harness parses itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub participant: String,
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option: Option<u32>,
    pub backend: String,
    /// Trait count the prompt or features were built with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traits: Option<usize>,
    #[serde(default)]
    pub latency_ms: f64,
    #[serde(default)]
    pub repairs: Vec<Repair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

pub const PREDICTIONS_KIND: &str = "predictions";

/// Flatten one backend result into per-question lines. Parse failures
/// become one failed line per expected question.
pub fn to_lines(
    example: &PromptExample,
    result: &Result<PredictionOutput, PredictError>,
    config_hash: Option<&str>,
) -> Result<Vec<PredictionLine>, PredictError> {
    let base = |backend: &str, latency_ms: f64| PredictionLine {
        participant: example.participant_id.clone(),
        scenario: example.scenario_id.clone(),
        qid: None,
        option: None,
        backend: backend.to_string(),
        traits: Some(example.trait_count),
        latency_ms,
        repairs: vec![],
        error: None,
        raw: None,
        config_hash: config_hash.map(String::from),
    };
    match result {
        Ok(out) => Ok(example
            .question_ids
            .iter()
            .map(|q| PredictionLine {
                qid: Some(q.clone()),
                option: out.set.predictions.get(q).copied(),
                repairs: out.set.repairs.clone(),
                ..base(&out.meta.backend, out.meta.latency_ms)
            })
            .collect()),
        Err(PredictError::Parse { error, meta }) => Ok(example
            .question_ids
            .iter()
            .map(|q| PredictionLine {
                qid: Some(q.clone()),
                error: Some(error.kind.code().to_string()),
                raw: Some(error.raw.clone()),
                ..base(&meta.backend, meta.latency_ms)
            })
            .collect()),
        Err(e) => Err(e.clone()),
    }
}

/// Lines for a request that failed without an answer to parse (transport
/// errors after retries, model errors). Scored as failures.
pub fn failure_lines(
    example: &PromptExample,
    backend: &str,
    error: &PredictError,
    config_hash: Option<&str>,
) -> Vec<PredictionLine> {
    let code = match error {
        PredictError::Parse { error, .. } => error.kind.code().to_string(),
        PredictError::Remote(e) => format!("remote_{}", e.code()),
        PredictError::Model(_) => "model_error".to_string(),
    };
    example
        .question_ids
        .iter()
        .map(|q| PredictionLine {
            participant: example.participant_id.clone(),
            scenario: example.scenario_id.clone(),
            qid: Some(q.clone()),
            option: None,
            backend: backend.to_string(),
            traits: Some(example.trait_count),
            latency_ms: 0.0,
            repairs: vec![],
            error: Some(code.clone()),
            raw: None,
            config_hash: config_hash.map(String::from),
        })
        .collect()
}

/// Build a prediction set directly from a map (local backends).
pub(crate) fn local_set(predictions: BTreeMap<String, u32>) -> PredictionSet {
    PredictionSet {
        predictions,
        rationale: None,
        repairs: vec![],
        raw: String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outparse::{parse_strict, ErrorKind};

    fn example() -> PromptExample {
        PromptExample {
            text: "x".into(),
            participant_id: "p".into(),
            scenario_id: "s".into(),
            question_ids: vec!["Q1".into(), "Q2".into()],
            option_counts: vec![5, 5],
            trait_count: 0,
            template_version: "1".into(),
        }
    }

    fn meta() -> PredictionMeta {
        PredictionMeta {
            backend: "b".into(),
            latency_ms: 1.5,
            attempts: 1,
            flags: vec![],
        }
    }

    #[test]
    fn lines_for_success_and_parse_failure() {
        let ex = example();
        let set = parse_strict(r#"{"Q1": 2, "Q2": 5}"#, &ex.expected()).unwrap();
        let ok = Ok(PredictionOutput { set, meta: meta() });
        let lines = to_lines(&ex, &ok, Some("h")).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].option, Some(5));
        assert_eq!(lines[0].config_hash.as_deref(), Some("h"));

        let error = parse_strict("nope", &ex.expected()).unwrap_err();
        assert_eq!(error.kind, ErrorKind::MalformedJson);
        let failed = Err(PredictError::Parse {
            error,
            meta: meta(),
        });
        let lines = to_lines(&ex, &failed, None).unwrap();
        assert!(lines
            .iter()
            .all(|l| l.option.is_none() && l.error.as_deref() == Some("malformed_json")));
        assert_eq!(lines[0].raw.as_deref(), Some("nope"));
    }

    #[test]
    fn backend_config_tags() {
        let cfg: BackendConfig =
            serde_json::from_str(r#"{"kind": "uniform_random", "seed": 3}"#).unwrap();
        assert_eq!(cfg, BackendConfig::UniformRandom { seed: 3 });
        let cfg: BackendConfig = serde_json::from_str(r#"{"kind": "majority"}"#).unwrap();
        assert_eq!(cfg.kind(), "majority");
    }
}
