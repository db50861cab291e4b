//! Trait-conditioned multinomial logistic model.
//!
//! The logit of option `j` of question `q` is
//! `W[c(j)] . x + b[c(j)] + beta_q[j]`, where `c(j)` is the option's class
//! label, `x` the feature vector of the participant and `beta_q` an option
//! bias for questions seen in training. Class weights are shared across
//! scenarios, which is what lets the model score held-out scenarios.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    local_set, PredictError, PredictionMeta, PredictionOutput, PredictionRequest, Predictor,
};
use crate::psychometrics::TraitProfile;
use crate::scenario::{Bank, ResponseRecord, Scenario};
use crate::seeding;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    /// Append standardized age and a female indicator.
    pub demographics: bool,
    /// Append pairwise products among the first `interactions` traits.
    pub interactions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 40,
            batch_size: 256,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("participant {participant} has {have} traits, model needs {need}")]
    MissingFeatures {
        participant: String,
        need: usize,
        have: usize,
    },
    #[error("no profile for participant {0}")]
    MissingProfile(String),
    #[error("scenario {0} not in bank")]
    UnknownScenario(String),
    #[error("scenario {scenario} has no multiple-choice question {qid}")]
    UnknownQuestion { scenario: String, qid: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (learning rate {learning_rate})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },
    #[error("no training examples")]
    NoTrainingData,
}

/// Feature vector for a profile.
pub fn features(
    profile: &TraitProfile,
    n_traits: usize,
    spec: &FeatureSpec,
) -> Result<Vec<f64>, ModelError> {
    if profile.traits.len() < n_traits {
        return Err(ModelError::MissingFeatures {
            participant: profile.participant_id.clone(),
            need: n_traits,
            have: profile.traits.len(),
        });
    }
    let z: Vec<f64> = profile.traits[..n_traits]
        .iter()
        .map(|t| t.z.unwrap_or(0.0))
        .collect();
    let mut x = z.clone();
    if spec.demographics {
        x.push((profile.age - 45.0) / 15.0);
        x.push(if profile.sex.eq_ignore_ascii_case("female") {
            1.0
        } else {
            0.0
        });
    }
    let m = spec.interactions.min(n_traits);
    for i in 0..m {
        for j in i + 1..m {
            x.push(z[i] * z[j]);
        }
    }
    Ok(x)
}

pub fn feature_dim(n_traits: usize, spec: &FeatureSpec) -> usize {
    let m = spec.interactions.min(n_traits);
    n_traits + if spec.demographics { 2 } else { 0 } + m * m.saturating_sub(1) / 2
}

fn slot_key(scenario: &str, qid: &str) -> String {
    format!("{scenario}::{qid}")
}

/// Model parameters. `q` concatenates the option biases of every seen
/// question in slot order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub q: Vec<f64>,
}

impl Params {
    pub fn zeros(classes: usize, dim: usize, q_len: usize) -> Self {
        Self {
            dim,
            w: vec![0.0; classes * dim],
            b: vec![0.0; classes],
            q: vec![0.0; q_len],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.w
            .iter()
            .chain(&self.b)
            .chain(&self.q)
            .copied()
            .collect()
    }

    pub fn set_flat(&mut self, theta: &[f64]) {
        let (w, rest) = theta.split_at(self.w.len());
        let (b, q) = rest.split_at(self.b.len());
        self.w.copy_from_slice(w);
        self.b.copy_from_slice(b);
        self.q.copy_from_slice(q);
    }

    fn axpy(&mut self, a: f64, other: &Params) {
        for (x, y) in self.w.iter_mut().zip(&other.w) {
            *x += a * y;
        }
        for (x, y) in self.b.iter_mut().zip(&other.b) {
            *x += a * y;
        }
        for (x, y) in self.q.iter_mut().zip(&other.q) {
            *x += a * y;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub x: Vec<f64>,
    /// Class index per option.
    pub classes: Vec<usize>,
    /// Offset of this question's option biases in `Params::q`.
    pub q_offset: usize,
    /// 0-based true option.
    pub truth: usize,
}

/// Featurized training pairs plus the class and slot layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub n_traits: usize,
    pub spec: FeatureSpec,
    pub classes: Vec<String>,
    pub slots: BTreeMap<String, usize>,
    pub q_len: usize,
    pub examples: Vec<TrainExample>,
}

impl TrainingSet {
    pub fn build<'a>(
        train: impl IntoIterator<Item = &'a ResponseRecord>,
        profiles: &BTreeMap<String, TraitProfile>,
        bank: &Bank,
        n_traits: usize,
        spec: FeatureSpec,
    ) -> Result<Self, ModelError> {
        let train: Vec<&ResponseRecord> = train.into_iter().collect();
        let mut class_set = std::collections::BTreeSet::new();
        let mut slots = BTreeMap::new();
        let mut q_len = 0;
        for r in &train {
            let s = bank
                .get(&r.scenario_id)
                .ok_or_else(|| ModelError::UnknownScenario(r.scenario_id.clone()))?;
            for qid in r.truth.keys() {
                let q = s.question(qid).filter(|q| q.is_target()).ok_or_else(|| {
                    ModelError::UnknownQuestion {
                        scenario: s.id.clone(),
                        qid: qid.clone(),
                    }
                })?;
                class_set.extend(q.options.iter().map(|o| o.class_label()));
                slots.entry(slot_key(&s.id, qid)).or_insert_with(|| {
                    let at = q_len;
                    q_len += q.options.len();
                    at
                });
            }
        }
        let classes: Vec<String> = class_set.into_iter().collect();
        let class_index: BTreeMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();

        let mut examples = Vec::new();
        for r in &train {
            let profile = profiles
                .get(&r.participant_id)
                .ok_or_else(|| ModelError::MissingProfile(r.participant_id.clone()))?;
            let x = features(profile, n_traits, &spec)?;
            let s = bank.get(&r.scenario_id).expect("checked above");
            for (qid, &opt) in &r.truth {
                let q = s.question(qid).expect("checked above");
                examples.push(TrainExample {
                    x: x.clone(),
                    classes: q
                        .options
                        .iter()
                        .map(|o| class_index[o.class_label().as_str()])
                        .collect(),
                    q_offset: slots[&slot_key(&s.id, qid)],
                    truth: opt as usize - 1,
                });
            }
        }
        Ok(Self {
            n_traits,
            spec,
            classes,
            slots,
            q_len,
            examples,
        })
    }

    pub fn dim(&self) -> usize {
        feature_dim(self.n_traits, &self.spec)
    }

    pub fn zero_params(&self) -> Params {
        Params::zeros(self.classes.len(), self.dim(), self.q_len)
    }

    /// Mean cross-entropy over `idx` plus `l2 / 2 * |W|^2`, and its gradient.
    pub fn loss_grad(&self, p: &Params, idx: &[usize], l2: f64) -> (f64, Params) {
        let mut g = Params::zeros(p.b.len(), p.dim, p.q.len());
        let mut loss = 0.0;
        let scale = 1.0 / idx.len() as f64;
        let mut logits = Vec::new();
        for &i in idx {
            let e = &self.examples[i];
            logit_into(p, &e.x, &e.classes, Some(e.q_offset), &mut logits);
            let lse = log_sum_exp(&logits);
            loss += lse - logits[e.truth];
            for (j, &c) in e.classes.iter().enumerate() {
                let d = ((logits[j] - lse).exp() - if j == e.truth { 1.0 } else { 0.0 }) * scale;
                let row = &mut g.w[c * p.dim..(c + 1) * p.dim];
                for (gw, xv) in row.iter_mut().zip(&e.x) {
                    *gw += d * xv;
                }
                g.b[c] += d;
                g.q[e.q_offset + j] += d;
            }
        }
        loss *= scale;
        loss += 0.5 * l2 * p.w.iter().map(|w| w * w).sum::<f64>();
        for (gw, w) in g.w.iter_mut().zip(&p.w) {
            *gw += l2 * w;
        }
        (loss, g)
    }

    pub fn full_loss(&self, p: &Params, l2: f64) -> f64 {
        let idx: Vec<usize> = (0..self.examples.len()).collect();
        self.loss_grad(p, &idx, l2).0
    }
}

fn logit_into(
    p: &Params,
    x: &[f64],
    classes: &[usize],
    q_offset: Option<usize>,
    out: &mut Vec<f64>,
) {
    out.clear();
    for (j, &c) in classes.iter().enumerate() {
        let row = &p.w[c * p.dim..(c + 1) * p.dim];
        let mut v = p.b[c] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        if let Some(off) = q_offset {
            v += p.q[off + j];
        }
        out.push(v);
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax probabilities and the argmax (lowest index on ties, 1-based).
pub fn softmax_argmax(logits: &[f64]) -> (u32, Vec<f64>) {
    let lse = log_sum_exp(logits);
    let probs: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    let mut best = 0;
    for (j, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = j;
        }
    }
    (best as u32 + 1, probs)
}

/// Full-data loss after every epoch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTrace {
    pub epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitLinearModel {
    pub n_traits: usize,
    pub features: FeatureSpec,
    pub hyper: Hyper,
    pub classes: Vec<String>,
    pub slots: BTreeMap<String, usize>,
    pub params: Params,
    pub trace: LossTrace,
}

impl TraitLinearModel {
    pub fn train(set: &TrainingSet, hyper: Hyper) -> Result<Self, ModelError> {
        let n = set.examples.len();
        if n == 0 {
            return Err(ModelError::NoTrainingData);
        }
        let mut p = set.zero_params();
        let batch = if hyper.batch_size == 0 {
            n
        } else {
            hyper.batch_size.min(n)
        };
        let mut order: Vec<usize> = (0..n).collect();
        let mut trace = LossTrace::default();
        for epoch in 0..hyper.epochs {
            if batch < n {
                order.sort_unstable();
                order.shuffle(&mut seeding::rng_indexed(
                    hyper.seed,
                    "trait-model-epoch",
                    epoch as u64,
                ));
            }
            for (bi, chunk) in order.chunks(batch).enumerate() {
                let (loss, g) = set.loss_grad(&p, chunk, hyper.l2);
                if !loss.is_finite() {
                    return Err(ModelError::NonFiniteLoss {
                        epoch,
                        batch: bi,
                        learning_rate: hyper.learning_rate,
                    });
                }
                p.axpy(-hyper.learning_rate, &g);
            }
            let loss = set.full_loss(&p, hyper.l2);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: usize::MAX,
                    learning_rate: hyper.learning_rate,
                });
            }
            trace.epoch_loss.push(loss);
        }
        Ok(Self {
            n_traits: set.n_traits,
            features: set.spec,
            hyper,
            classes: set.classes.clone(),
            slots: set.slots.clone(),
            params: p,
            trace,
        })
    }

    pub fn fit<'a>(
        train: impl IntoIterator<Item = &'a ResponseRecord>,
        profiles: &BTreeMap<String, TraitProfile>,
        bank: &Bank,
        n_traits: usize,
        spec: FeatureSpec,
        hyper: Hyper,
    ) -> Result<Self, ModelError> {
        let set = TrainingSet::build(train, profiles, bank, n_traits, spec)?;
        Self::train(&set, hyper)
    }

    pub fn logits(
        &self,
        profile: &TraitProfile,
        scenario: &Scenario,
        qid: &str,
    ) -> Result<Vec<f64>, ModelError> {
        let q = scenario
            .question(qid)
            .filter(|q| q.is_target())
            .ok_or_else(|| ModelError::UnknownQuestion {
                scenario: scenario.id.clone(),
                qid: qid.to_string(),
            })?;
        let x = features(profile, self.n_traits, &self.features)?;
        let p = &self.params;
        let offset = self.slots.get(&slot_key(&scenario.id, qid)).copied();
        let mut out = Vec::with_capacity(q.options.len());
        for (j, o) in q.options.iter().enumerate() {
            let label = o.class_label();
            // a class never seen in training contributes nothing
            let mut v = match self.classes.binary_search(&label) {
                Ok(c) => {
                    p.b[c]
                        + p.w[c * p.dim..(c + 1) * p.dim]
                            .iter()
                            .zip(&x)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                }
                Err(_) => 0.0,
            };
            if let Some(off) = offset {
                v += p.q[off + j];
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Chosen option (1-based, lowest index on ties) and probabilities.
    pub fn predict_proba(
        &self,
        profile: &TraitProfile,
        scenario: &Scenario,
        qid: &str,
    ) -> Result<(u32, Vec<f64>), ModelError> {
        Ok(softmax_argmax(&self.logits(profile, scenario, qid)?))
    }
}

impl Predictor for TraitLinearModel {
    fn name(&self) -> &str {
        "trait_model"
    }

    fn predict(&self, req: &PredictionRequest) -> Result<PredictionOutput, PredictError> {
        let mut predictions = BTreeMap::new();
        for qid in &req.example.question_ids {
            let (opt, _) = self.predict_proba(req.profile, req.scenario, qid)?;
            predictions.insert(qid.clone(), opt);
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
