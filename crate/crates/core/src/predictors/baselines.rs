use std::collections::BTreeMap;

use rand::Rng;

use super::{
    local_set, PredictError, PredictionMeta, PredictionOutput, PredictionRequest, Predictor,
};
use crate::scenario::ResponseRecord;
use crate::seeding;

/// Uniform choice per question, keyed by (seed, participant, scenario, qid).
#[derive(Debug, Clone)]
pub struct UniformRandom {
    pub seed: u64,
}

impl Predictor for UniformRandom {
    fn name(&self) -> &str {
        "uniform_random"
    }

    fn predict(&self, req: &PredictionRequest) -> Result<PredictionOutput, PredictError> {
        let ex = req.example;
        let mut predictions = BTreeMap::new();
        for (qid, &count) in ex.question_ids.iter().zip(&ex.option_counts) {
            let mut rng = seeding::rng_for(
                self.seed,
                &[
                    ex.participant_id.as_bytes(),
                    ex.scenario_id.as_bytes(),
                    qid.as_bytes(),
                ],
            );
            predictions.insert(qid.clone(), rng.gen_range(1..=count));
        }
        Ok(PredictionOutput {
            set: local_set(predictions),
            meta: PredictionMeta {
                backend: self.name().into(),
                latency_ms: 0.0,
                attempts: 1,
                flags: vec![],
            },
        })
    }
}

/// Most frequent training answer per question id, pooled over training
/// scenarios. Ties go to the lowest option; an unseen id predicts 1.
#[derive(Debug, Clone, Default)]
pub struct Majority {
    counts: BTreeMap<String, BTreeMap<u32, u64>>,
}

impl Majority {
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a ResponseRecord>) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<u32, u64>> = BTreeMap::new();
        for r in train {
            for (qid, &opt) in &r.truth {
                *counts
                    .entry(qid.clone())
                    .or_default()
                    .entry(opt)
                    .or_default() += 1;
            }
        }
        Self { counts }
    }

    /// `(option, seen)`.
    pub fn mode(&self, qid: &str) -> (u32, bool) {
        match self.counts.get(qid) {
            None => (1, false),
            Some(c) => {
                // BTreeMap iterates in option order, so the first maximum is the lowest index
                let mut best = (0u32, 0u64);
                for (&opt, &n) in c {
                    if n > best.1 {
                        best = (opt, n);
                    }
                }
                (best.0, true)
            }
        }
    }
}

impl Predictor for Majority {
    fn name(&self) -> &str {
        "majority"
    }

    fn predict(&self, req: &PredictionRequest) -> Result<PredictionOutput, PredictError> {
        let ex = req.example;
        let mut predictions = BTreeMap::new();
        let mut flags = Vec::new();
        for (qid, &count) in ex.question_ids.iter().zip(&ex.option_counts) {
            let (mut opt, seen) = self.mode(qid);
            if !seen {
                flags.push(format!("unseen_qid:{qid}"));
            }
            if opt > count {
                flags.push(format!("mode_out_of_range:{qid}"));
                opt = 1;
            }
            predictions.insert(qid.clone(), opt);
        }
        Ok(PredictionOutput {
            set: local_set(predictions),
            meta: PredictionMeta {
                backend: self.name().into(),
                latency_ms: 0.0,
                attempts: 1,
                flags,
            },
        })
    }
}
