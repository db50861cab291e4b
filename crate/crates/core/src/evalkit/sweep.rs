//! Trait-count sweeps: every (backend, count) cell sees the same split,
//! the same eval records and the same bootstrap seed.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::bootstrap::{bootstrap_all, BootstrapConfig, BootstrapError};
use super::metrics::{
    class_count, confusion, scores, scores_per_question, FailurePolicy, LabeledPrediction,
    MetricError, Scores,
};
use super::report::{CellFailure, CellSummary, EvalReport, ReportRow};
use crate::outparse::{parse_lenient, parse_strict, Expected};
use crate::predictors::{
    BackendConfig, Majority, PredictError, PredictionLine, PredictionRequest, Predictor,
    RemoteChat, TraitLinearModel, UniformRandom,
};
use crate::promptgen::{serialize_example, PromptError, PromptExample, PromptOptions};
use crate::psychometrics::TraitProfile;
use crate::scenario::{eval_records, train_records, Bank, EvalLeak, ResponseRecord, ScenarioSplit};

pub const DEFAULT_COUNTS: [usize; 5] = [5, 10, 20, 40, 74];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub counts: Vec<usize>,
    pub bootstrap: BootstrapConfig,
    pub prompt: PromptOptions,
    /// Also compute the per-question averaged scores.
    pub per_question: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            counts: DEFAULT_COUNTS.to_vec(),
            bootstrap: BootstrapConfig::default(),
            prompt: PromptOptions::default(),
            per_question: false,
        }
    }
}

/// Data a backend may fit on. `train` holds training-split records only.
pub struct FitContext<'a> {
    pub n_traits: usize,
    pub train: &'a [&'a ResponseRecord],
    pub profiles: &'a BTreeMap<String, TraitProfile>,
    pub bank: &'a Bank,
}

/// Builds one predictor per sweep cell.
pub trait BackendFactory: Sync {
    fn name(&self) -> String;
    fn build(&self, ctx: &FitContext) -> Result<Box<dyn Predictor>, PredictError>;
}

impl BackendFactory for BackendConfig {
    fn name(&self) -> String {
        match self {
            BackendConfig::RemoteChat(c) => c.name.clone().unwrap_or_else(|| c.model_name.clone()),
            other => other.kind().to_string(),
        }
    }

    fn build(&self, ctx: &FitContext) -> Result<Box<dyn Predictor>, PredictError> {
        Ok(match self {
            BackendConfig::RemoteChat(c) => Box::new(RemoteChat::new(c.clone())?),
            BackendConfig::UniformRandom { seed } => Box::new(UniformRandom { seed: *seed }),
            BackendConfig::Majority => Box::new(Majority::fit(ctx.train.iter().copied())),
            BackendConfig::TraitModel { hyper, features } => Box::new(TraitLinearModel::fit(
                ctx.train.iter().copied(),
                ctx.profiles,
                ctx.bank,
                ctx.n_traits,
                *features,
                *hyper,
            )?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error("trait count {count} exceeds the {available} traits of participant {participant}")]
    Counts {
        count: usize,
        available: usize,
        participant: String,
    },
    #[error("trait counts must be strictly ascending, got {0:?}")]
    CountOrder(Vec<usize>),
    #[error("no profile for participant {0}")]
    MissingProfile(String),
    #[error("unknown scenario {0}")]
    UnknownScenario(String),
    #[error("no evaluation records")]
    NoEvalRecords,
    #[error(transparent)]
    Leak(#[from] EvalLeak),
    #[error("duplicate prediction for {participant}/{scenario}/{qid}")]
    Duplicate {
        participant: String,
        scenario: String,
        qid: String,
    },
    #[error("prediction for {participant}/{scenario} has no ground truth")]
    NoTruth {
        participant: String,
        scenario: String,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
}

/// Score one cell: bootstrap rows for the three metrics plus the summary.
pub fn score_cell(
    model: &str,
    traits: usize,
    preds: &[LabeledPrediction],
    cfg: &SweepConfig,
) -> Result<(Vec<ReportRow>, CellSummary), SweepError> {
    let results = bootstrap_all(preds, &cfg.bootstrap)?;
    let k = class_count(preds);
    let as_wrong = scores(&confusion(preds, k, FailurePolicy::AsWrong)?)?;
    let kept: Vec<&LabeledPrediction> = preds.iter().filter(|p| p.predicted.is_some()).collect();
    let excluded = if kept.is_empty() {
        None
    } else {
        Some(scores(&confusion(
            kept.iter().copied(),
            class_count(kept.iter().copied()),
            FailurePolicy::Exclude,
        )?)?)
    };
    let per_question = if cfg.per_question {
        let all: Vec<&LabeledPrediction> = preds.iter().collect();
        Some(scores_per_question(&all, cfg.bootstrap.policy)?)
    } else {
        None
    };
    let participants: BTreeSet<&str> = preds.iter().map(|p| p.participant_id.as_str()).collect();
    let summary = CellSummary {
        model: model.to_string(),
        traits,
        n_predictions: preds.len(),
        n_participants: participants.len(),
        parse_failures: preds.len() - kept.len(),
        failures_as_wrong: as_wrong,
        failures_excluded: excluded,
        per_question,
    };
    let rows = results
        .into_iter()
        .map(|result| ReportRow {
            model: model.to_string(),
            traits,
            result,
        })
        .collect();
    Ok((rows, summary))
}

fn target_ids(r: &ResponseRecord) -> Vec<String> {
    r.truth.keys().cloned().collect()
}

/// Prompts for every eval record at `n` traits, in record order.
pub fn eval_examples(
    eval: &[&ResponseRecord],
    profiles: &BTreeMap<String, TraitProfile>,
    bank: &Bank,
    n: usize,
    opts: PromptOptions,
) -> Result<Vec<PromptExample>, SweepError> {
    eval.iter()
        .map(|r| {
            let profile = profiles
                .get(&r.participant_id)
                .ok_or_else(|| SweepError::MissingProfile(r.participant_id.clone()))?;
            let scenario = bank
                .get(&r.scenario_id)
                .ok_or_else(|| SweepError::UnknownScenario(r.scenario_id.clone()))?;
            Ok(serialize_example(
                profile,
                scenario,
                &r.context_answers,
                &target_ids(r),
                n,
                opts,
            )?)
        })
        .collect()
}

/// Run one backend at one trait count on the eval records.
pub fn predict_cell(
    predictor: &dyn Predictor,
    eval: &[&ResponseRecord],
    examples: &[PromptExample],
    profiles: &BTreeMap<String, TraitProfile>,
    bank: &Bank,
) -> Result<Vec<LabeledPrediction>, SweepError> {
    let mut reqs = Vec::with_capacity(examples.len());
    for ex in examples {
        let profile = profiles
            .get(&ex.participant_id)
            .ok_or_else(|| SweepError::MissingProfile(ex.participant_id.clone()))?;
        let scenario = bank
            .get(&ex.scenario_id)
            .ok_or_else(|| SweepError::UnknownScenario(ex.scenario_id.clone()))?;
        reqs.push(PredictionRequest {
            example: ex,
            profile,
            scenario,
        });
    }
    let results = predictor.predict_batch(&reqs);
    let mut out = Vec::new();
    for ((r, req), res) in eval.iter().zip(&reqs).zip(results) {
        let predicted: BTreeMap<String, u32> = match res {
            Ok(o) => o.set.predictions,
            Err(PredictError::Parse { .. }) => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        for (qid, &truth) in &r.truth {
            out.push(LabeledPrediction {
                participant_id: r.participant_id.clone(),
                scenario_id: r.scenario_id.clone(),
                qid: qid.clone(),
                predicted: predicted.get(qid).copied(),
                truth,
                option_count: req
                    .scenario
                    .question(qid)
                    .map(|q| q.option_count())
                    .unwrap_or(0),
            });
        }
    }
    Ok(out)
}

/// Evaluate every backend at every trait count on the eval side of `split`.
/// A cell whose backend fails is listed under `failures`; the sweep goes on.
pub fn sweep_traits(
    backends: &[&dyn BackendFactory],
    bank: &Bank,
    records: &[ResponseRecord],
    profiles: &BTreeMap<String, TraitProfile>,
    split: &ScenarioSplit,
    cfg: &SweepConfig,
    config_hash: &str,
) -> Result<EvalReport, SweepError> {
    if cfg.counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SweepError::CountOrder(cfg.counts.clone()));
    }
    let eval = eval_records(records, split);
    let train = train_records(records, split);
    if eval.is_empty() {
        return Err(SweepError::NoEvalRecords);
    }
    for r in &eval {
        split.assert_eval(&r.participant_id, &r.scenario_id)?;
    }
    let max = cfg.counts.last().copied().unwrap_or(0);
    for r in eval.iter().chain(&train) {
        let p = profiles
            .get(&r.participant_id)
            .ok_or_else(|| SweepError::MissingProfile(r.participant_id.clone()))?;
        if p.traits.len() < max {
            return Err(SweepError::Counts {
                count: max,
                available: p.traits.len(),
                participant: p.participant_id.clone(),
            });
        }
    }

    let examples: Vec<Vec<PromptExample>> = cfg
        .counts
        .iter()
        .map(|&n| eval_examples(&eval, profiles, bank, n, cfg.prompt))
        .collect::<Result<_, _>>()?;

    let cells: Vec<(usize, usize)> = (0..backends.len())
        .flat_map(|b| (0..cfg.counts.len()).map(move |c| (b, c)))
        .collect();
    let outcomes: Vec<Result<(Vec<ReportRow>, CellSummary), CellFailure>> = cells
        .par_iter()
        .map(|&(b, c)| {
            let backend = backends[b];
            let n = cfg.counts[c];
            let fail = |e: SweepError| CellFailure {
                model: backend.name(),
                traits: n,
                error: e.to_string(),
            };
            let ctx = FitContext {
                n_traits: n,
                train: &train,
                profiles,
                bank,
            };
            let predictor = backend.build(&ctx).map_err(|e| fail(e.into()))?;
            let preds = predict_cell(predictor.as_ref(), &eval, &examples[c], profiles, bank)
                .map_err(fail)?;
            score_cell(&backend.name(), n, &preds, cfg).map_err(fail)
        })
        .collect();

    let mut report = EvalReport::new(config_hash);
    for o in outcomes {
        match o {
            Ok((rows, summary)) => {
                report.rows.extend(rows);
                report.cells.push(summary);
            }
            Err(f) => {
                log::warn!("cell {} @ {} traits failed: {}", f.model, f.traits, f.error);
                report.failures.push(f);
            }
        }
    }
    report.sort_rows();
    Ok(report)
}

/// Join prediction lines with ground truth.
///
/// With a split, every eval record is scored and a missing line counts as
/// a failure; a line for a non-eval scenario is a leak. Without a split,
/// only records that have at least one line are scored. Lines carrying raw
/// text and no `qid` are parsed here.
pub fn label_predictions(
    lines: &[PredictionLine],
    records: &[ResponseRecord],
    bank: &Bank,
    split: Option<&ScenarioSplit>,
    lenient: bool,
) -> Result<Vec<LabeledPrediction>, SweepError> {
    let truth: BTreeMap<(&str, &str), &ResponseRecord> = records
        .iter()
        .map(|r| ((r.participant_id.as_str(), r.scenario_id.as_str()), r))
        .collect();
    let mut got: BTreeMap<(String, String, String), Option<u32>> = BTreeMap::new();
    let mut seen_pairs: BTreeSet<(String, String)> = BTreeSet::new();
    let mut put = |p: &str, s: &str, q: &str, v: Option<u32>| -> Result<(), SweepError> {
        let key = (p.to_string(), s.to_string(), q.to_string());
        if got.insert(key, v).is_some() {
            return Err(SweepError::Duplicate {
                participant: p.into(),
                scenario: s.into(),
                qid: q.into(),
            });
        }
        Ok(())
    };
    for l in lines {
        if let Some(split) = split {
            split.assert_eval(&l.participant, &l.scenario)?;
        }
        let rec = truth
            .get(&(l.participant.as_str(), l.scenario.as_str()))
            .ok_or_else(|| SweepError::NoTruth {
                participant: l.participant.clone(),
                scenario: l.scenario.clone(),
            })?;
        seen_pairs.insert((l.participant.clone(), l.scenario.clone()));
        match (&l.qid, &l.raw) {
            (Some(q), _) => put(
                &l.participant,
                &l.scenario,
                q,
                if l.error.is_some() { None } else { l.option },
            )?,
            (None, Some(raw)) => {
                let scenario = bank
                    .get(&l.scenario)
                    .ok_or_else(|| SweepError::UnknownScenario(l.scenario.clone()))?;
                let expected: Expected = rec
                    .truth
                    .keys()
                    .filter_map(|q| {
                        scenario
                            .question(q)
                            .map(|qq| (q.clone(), qq.option_count()))
                    })
                    .collect();
                let parsed = if lenient {
                    parse_lenient(raw, &expected)
                } else {
                    parse_strict(raw, &expected)
                };
                let map = parsed.map(|s| s.predictions).unwrap_or_default();
                for q in expected.keys() {
                    put(&l.participant, &l.scenario, q, map.get(q).copied())?;
                }
            }
            (None, None) => {
                for q in rec.truth.keys() {
                    put(&l.participant, &l.scenario, q, None)?;
                }
            }
        }
    }

    let scored: Vec<&ResponseRecord> = match split {
        Some(split) => eval_records(records, split),
        None => records
            .iter()
            .filter(|r| seen_pairs.contains(&(r.participant_id.clone(), r.scenario_id.clone())))
            .collect(),
    };
    let mut out = Vec::new();
    for r in scored {
        let scenario = bank
            .get(&r.scenario_id)
            .ok_or_else(|| SweepError::UnknownScenario(r.scenario_id.clone()))?;
        for (qid, &t) in &r.truth {
            let predicted = got
                .get(&(r.participant_id.clone(), r.scenario_id.clone(), qid.clone()))
                .copied()
                .flatten();
            out.push(LabeledPrediction {
                participant_id: r.participant_id.clone(),
                scenario_id: r.scenario_id.clone(),
                qid: qid.clone(),
                predicted,
                truth: t,
                option_count: scenario
                    .question(qid)
                    .map(|q| q.option_count())
                    .unwrap_or(0),
            });
        }
    }
    Ok(out)
}

/// Point scores for the excluded-failures policy, when anything is left.
pub fn excluded_scores(preds: &[LabeledPrediction]) -> Option<Scores> {
    let kept: Vec<&LabeledPrediction> = preds.iter().filter(|p| p.predicted.is_some()).collect();
    if kept.is_empty() {
        return None;
    }
    let m = confusion(
        kept.iter().copied(),
        class_count(kept.iter().copied()),
        FailurePolicy::Exclude,
    )
    .ok()?;
    scores(&m).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::FeatureSpec;
    use crate::psychometrics::{TraitProfile, TraitScore};
    use crate::scenario::{bank_tests, split_scenarios};

    fn profile(id: &str, k: usize) -> TraitProfile {
        TraitProfile {
            participant_id: id.into(),
            age: 30.0,
            sex: "female".into(),
            traits: (0..k)
                .map(|i| TraitScore {
                    trait_id: format!("T{i}"),
                    raw: 0.0,
                    z: Some(0.1 * i as f64),
                    bin: "Normal".into(),
                })
                .collect(),
            trait_order_id: "t".into(),
        }
    }

    fn fixture() -> (Bank, Vec<ResponseRecord>, BTreeMap<String, TraitProfile>) {
        let bank = Bank::new(
            (0..8)
                .map(|i| bank_tests::scenario(&format!("S{i}")))
                .collect(),
        )
        .unwrap();
        let mut records = Vec::new();
        let mut profiles = BTreeMap::new();
        for p in 0..12 {
            let pid = format!("P{p:02}");
            profiles.insert(pid.clone(), profile(&pid, 6));
            for s in 0..8 {
                records.push(ResponseRecord {
                    participant_id: pid.clone(),
                    scenario_id: format!("S{s}"),
                    context_answers: vec![],
                    truth: BTreeMap::from([("Q1".to_string(), 1 + ((p + s) % 3) as u32)]),
                    ratings: Default::default(),
                    open_text: Default::default(),
                });
            }
        }
        (bank, records, profiles)
    }

    fn cfg(counts: Vec<usize>) -> SweepConfig {
        SweepConfig {
            counts,
            bootstrap: BootstrapConfig {
                n_resamples: 200,
                seed: 1,
                policy: FailurePolicy::AsWrong,
            },
            ..Default::default()
        }
    }

    #[test]
    fn majority_is_flat_across_counts() {
        let (bank, records, profiles) = fixture();
        let split = split_scenarios(&bank, 0.5, 3, false).unwrap();
        let backends: [&dyn BackendFactory; 1] = [&BackendConfig::Majority];
        let report = sweep_traits(
            &backends,
            &bank,
            &records,
            &profiles,
            &split,
            &cfg(vec![1, 3, 6]),
            "h",
        )
        .unwrap();
        assert_eq!(report.rows.len(), 9);
        let first: Vec<_> = report.rows[..3].iter().map(|r| r.result.clone()).collect();
        for chunk in report.rows.chunks(3) {
            let rs: Vec<_> = chunk.iter().map(|r| r.result.clone()).collect();
            assert_eq!(rs, first);
        }
        assert!(report.failures.is_empty());
    }

    #[test]
    fn counts_checked_against_profiles() {
        let (bank, records, profiles) = fixture();
        let split = split_scenarios(&bank, 0.5, 3, false).unwrap();
        let backends: [&dyn BackendFactory; 1] = [&BackendConfig::Majority];
        let err = sweep_traits(
            &backends,
            &bank,
            &records,
            &profiles,
            &split,
            &cfg(vec![5, 7]),
            "h",
        )
        .unwrap_err();
        assert!(matches!(
            err,
            SweepError::Counts {
                count: 7,
                available: 6,
                ..
            }
        ));
        let err = sweep_traits(
            &backends,
            &bank,
            &records,
            &profiles,
            &split,
            &cfg(vec![5, 5]),
            "h",
        )
        .unwrap_err();
        assert!(matches!(err, SweepError::CountOrder(_)));
    }

    #[test]
    fn failing_backend_marks_cell_not_sweep() {
        let (bank, records, profiles) = fixture();
        let split = split_scenarios(&bank, 0.5, 3, false).unwrap();
        let bad = BackendConfig::RemoteChat(crate::predictors::RemoteConfig {
            endpoint: "http://127.0.0.1:1/unreachable".into(),
            model_name: "m".into(),
            max_retries: 0,
            timeout_s: 0.5,
            ..Default::default()
        });
        let tm = BackendConfig::TraitModel {
            hyper: Default::default(),
            features: FeatureSpec::default(),
        };
        let backends: [&dyn BackendFactory; 2] = [&bad, &tm];
        let report = sweep_traits(
            &backends,
            &bank,
            &records,
            &profiles,
            &split,
            &cfg(vec![2]),
            "h",
        )
        .unwrap();
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].model, "m");
        assert_eq!(report.rows.len(), 3);
        assert!(report.rows.iter().all(|r| r.model == "trait_model"));
    }

    #[test]
    fn labels_from_lines_with_missing_and_raw() {
        let (bank, records, _) = fixture();
        let split = split_scenarios(&bank, 0.5, 3, false).unwrap();
        let eval = eval_records(&records, &split);
        let line = |r: &ResponseRecord,
                    qid: Option<&str>,
                    option: Option<u32>,
                    raw: Option<&str>| PredictionLine {
            participant: r.participant_id.clone(),
            scenario: r.scenario_id.clone(),
            qid: qid.map(String::from),
            option,
            backend: "b".into(),
            traits: None,
            latency_ms: 0.0,
            repairs: vec![],
            error: None,
            raw: raw.map(String::from),
            config_hash: None,
        };
        let lines = vec![
            line(eval[0], Some("Q1"), Some(eval[0].truth["Q1"]), None),
            line(eval[1], None, None, Some(r#"{"Q1": 2}"#)),
            line(eval[2], None, None, Some("not json")),
        ];
        let preds = label_predictions(&lines, &records, &bank, Some(&split), false).unwrap();
        assert_eq!(preds.len(), eval.len());
        assert_eq!(preds[0].predicted, Some(eval[0].truth["Q1"]));
        assert_eq!(preds[1].predicted, Some(2));
        assert_eq!(preds[2].predicted, None);
        assert!(preds[3..].iter().all(|p| p.predicted.is_none()));

        let only = label_predictions(&lines, &records, &bank, None, false).unwrap();
        assert_eq!(only.len(), 3);

        let dup = vec![lines[0].clone(), lines[0].clone()];
        assert!(matches!(
            label_predictions(&dup, &records, &bank, None, false),
            Err(SweepError::Duplicate { .. })
        ));

        let train = train_records(&records, &split);
        let leak = vec![line(train[0], Some("Q1"), Some(1), None)];
        assert!(matches!(
            label_predictions(&leak, &records, &bank, Some(&split), false),
            Err(SweepError::Leak(_))
        ));
    }

    #[test]
    fn failure_policies_are_ordered() {
        let preds = vec![
            crate::evalkit::metrics::tests::lp("a", "Q", 1, Some(1), 3),
            crate::evalkit::metrics::tests::lp("a", "Q", 2, None, 3),
            crate::evalkit::metrics::tests::lp("b", "Q", 3, Some(2), 3),
        ];
        let (_, s) = score_cell("m", 0, &preds, &cfg(vec![0])).unwrap();
        let ex = s.failures_excluded.unwrap();
        assert!(s.failures_as_wrong.accuracy <= ex.accuracy);
        assert_eq!(excluded_scores(&preds), Some(ex));
        assert_eq!(s.parse_failures, 1);
    }
}
