use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::choice::ChoiceModel;
use super::cohort::z_vector;
use super::SynthError;
use crate::psychometrics::TraitProfile;
use crate::scenario::{Bank, ContextAnswer, ResponseRecord};
use crate::seeding;

pub const GROUND_TRUTH_KIND: &str = "ground_truth";

/// Context answers are picked from these, per (participant, scenario, question).
pub const CONTEXT_TEMPLATES: [&str; 4] = [
    "Low: it had little effect on what I did.",
    "Moderate: it mattered to some extent.",
    "High: it weighed heavily on me.",
    "Hard to say: several things pulled in different directions.",
];

/// Oracle sidecar line: the generating distribution behind one answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub participant: String,
    pub scenario: String,
    pub qid: String,
    pub probabilities: Vec<f64>,
    pub bayes_option: u32,
    pub sampled: u32,
}

fn subset<R: Rng>(rng: &mut R, n: usize, rate: f64) -> Vec<usize> {
    if rate >= 1.0 {
        return (0..n).collect();
    }
    (0..n).filter(|_| rng.gen::<f64>() < rate).collect()
}

/// Sample one record per (participant, assigned scenario). Each participant
/// sees each scenario independently with probability `coverage_rate`.
pub fn gen_responses(
    profiles: &[TraitProfile],
    bank: &Bank,
    model: &ChoiceModel,
    coverage_rate: f64,
    seed: u64,
) -> Result<(Vec<ResponseRecord>, Vec<GroundTruth>), SynthError> {
    if !(coverage_rate > 0.0 && coverage_rate <= 1.0) {
        return Err(SynthError::Coverage(coverage_rate));
    }
    let per: Vec<(Vec<ResponseRecord>, Vec<GroundTruth>)> = profiles
        .par_iter()
        .enumerate()
        .map(|(i, profile)| {
            let z = z_vector(profile, model.k)?;
            let mut rng = seeding::rng_indexed(seed, "responses", i as u64);
            let mut picked = subset(&mut rng, bank.len(), coverage_rate);
            if picked.is_empty() {
                picked = subset(&mut rng, bank.len(), coverage_rate);
            }
            if picked.is_empty() {
                return Err(SynthError::EmptySubset(profile.participant_id.clone()));
            }
            let mut records = Vec::with_capacity(picked.len());
            let mut truths = Vec::new();
            for si in picked {
                let s = &bank.scenarios()[si];
                let context_answers = s
                    .context_questions
                    .iter()
                    .map(|q| ContextAnswer {
                        question: q.clone(),
                        answer: Some(
                            CONTEXT_TEMPLATES[rng.gen_range(0..CONTEXT_TEMPLATES.len())]
                                .to_string(),
                        ),
                    })
                    .collect();
                let mut truth = BTreeMap::new();
                for q in s.target_questions() {
                    let u = model.question(&s.id, &q.id)?;
                    let sampled = model.sample(u, &z, &mut rng);
                    truth.insert(q.id.clone(), sampled);
                    truths.push(GroundTruth {
                        participant: profile.participant_id.clone(),
                        scenario: s.id.clone(),
                        qid: q.id.clone(),
                        probabilities: model.probabilities(u, &z),
                        bayes_option: model.bayes_option(u, &z),
                        sampled,
                    });
                }
                records.push(ResponseRecord {
                    participant_id: profile.participant_id.clone(),
                    scenario_id: s.id.clone(),
                    context_answers,
                    truth,
                    ratings: BTreeMap::new(),
                    open_text: BTreeMap::new(),
                });
            }
            Ok((records, truths))
        })
        .collect::<Result<_, SynthError>>()?;
    let mut records = Vec::new();
    let mut truths = Vec::new();
    for (r, t) in per {
        records.extend(r);
        truths.extend(t);
    }
    Ok((records, truths))
}
