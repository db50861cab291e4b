use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::scenario::Bank;
use crate::seeding;

/// Draws used to calibrate the utility scale.
const CALIBRATION_DRAWS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChoiceSpec {
    /// Number of leading traits that carry signal (m).
    pub informative: usize,
    /// Number of pairwise products among the informative traits.
    pub interactions: usize,
    /// Softmax temperature; 0 means deterministic argmax.
    pub tau: f64,
    pub seed: u64,
    /// Scale utilities so the Bayes-optimal accuracy hits this value.
    pub target_bayes: Option<f64>,
    /// Size of the per-question deviation from the shared class weights.
    pub specificity: f64,
}

impl Default for ChoiceSpec {
    fn default() -> Self {
        Self {
            informative: 20,
            interactions: 0,
            tau: 1.0,
            seed: 0,
            target_bayes: Some(0.6),
            specificity: 0.3,
        }
    }
}

/// Utility weights for one (scenario, question).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionUtility {
    pub scenario: String,
    pub qid: String,
    /// options x K; columns at or beyond `informative` are zero.
    pub linear: Vec<Vec<f64>>,
    /// options x interaction pairs.
    pub pairwise: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceModel {
    pub k: usize,
    pub informative: usize,
    pub tau: f64,
    pub seed: u64,
    /// Multiplier already folded into the weights.
    pub scale: f64,
    pub pairs: Vec<(usize, usize)>,
    /// Keyed by `scenario::qid`.
    pub questions: BTreeMap<String, QuestionUtility>,
    /// E[max_j p_j] on the calibration draws, when calibrated.
    pub bayes_accuracy: Option<f64>,
}

pub(crate) fn key(scenario: &str, qid: &str) -> String {
    format!("{scenario}::{qid}")
}

fn softmax(u: &[f64], tau: f64) -> Vec<f64> {
    if tau == 0.0 {
        let best = argmax(u);
        return (0..u.len())
            .map(|j| if j == best { 1.0 } else { 0.0 })
            .collect();
    }
    let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().map(|v| ((v - m) / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Lowest index among the maxima.
fn argmax(u: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in u.iter().enumerate() {
        if v > u[best] {
            best = j;
        }
    }
    best
}

impl ChoiceModel {
    pub fn question(&self, scenario: &str, qid: &str) -> Result<&QuestionUtility, SynthError> {
        self.questions
            .get(&key(scenario, qid))
            .ok_or_else(|| SynthError::MissingQuestion(key(scenario, qid)))
    }

    pub fn utilities(&self, q: &QuestionUtility, z: &[f64]) -> Vec<f64> {
        let prods: Vec<f64> = self.pairs.iter().map(|&(a, b)| z[a] * z[b]).collect();
        q.linear
            .iter()
            .zip(&q.pairwise)
            .map(|(w, v)| {
                w[..self.informative]
                    .iter()
                    .zip(z)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + v.iter().zip(&prods).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, q: &QuestionUtility, z: &[f64]) -> Vec<f64> {
        softmax(&self.utilities(q, z), self.tau)
    }

    /// 1-based option maximizing the choice probability.
    pub fn bayes_option(&self, q: &QuestionUtility, z: &[f64]) -> u32 {
        argmax(&self.utilities(q, z)) as u32 + 1
    }

    /// Inverse-CDF draw from [`Self::probabilities`]; 1-based.
    pub fn sample<R: Rng>(&self, q: &QuestionUtility, z: &[f64], rng: &mut R) -> u32 {
        let p = self.probabilities(q, z);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (j, pj) in p.iter().enumerate() {
            acc += pj;
            if u < acc {
                return j as u32 + 1;
            }
        }
        // rounding left u just above the total
        p.iter().rposition(|&v| v > 0.0).unwrap_or(0) as u32 + 1
    }

    pub fn is_zero(&self) -> bool {
        self.questions.values().all(|q| {
            q.linear
                .iter()
                .chain(&q.pairwise)
                .flatten()
                .all(|&w| w == 0.0)
        })
    }
}

fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Build a choice model over every multiple-choice question of `bank`.
///
/// Option `j` of a question gets the weight vector of its class label
/// (shared across scenarios) plus a per-question deviation of size
/// `specificity`. Weights live on the first `informative` traits only.
pub fn gen_choice_model(
    bank: &Bank,
    k: usize,
    spec: &ChoiceSpec,
) -> Result<ChoiceModel, SynthError> {
    let m = spec.informative;
    if m > k {
        return Err(SynthError::TooManyInformative { m, k });
    }
    if !(spec.tau >= 0.0 && spec.tau.is_finite()) {
        return Err(SynthError::Temperature(spec.tau));
    }
    let available = m * m.saturating_sub(1) / 2;
    if spec.interactions > available {
        return Err(SynthError::TooManyPairs {
            requested: spec.interactions,
            available,
            m,
        });
    }
    let mut all_pairs = Vec::with_capacity(available);
    for a in 0..m {
        for b in a + 1..m {
            all_pairs.push((a, b));
        }
    }
    let mut pair_rng = seeding::rng_for(spec.seed, &[b"choice-pairs"]);
    let mut picked: Vec<usize> = sample(
        &mut pair_rng,
        available.max(1),
        spec.interactions.min(available),
    )
    .into_vec();
    picked.sort_unstable();
    let pairs: Vec<(usize, usize)> = picked.into_iter().map(|i| all_pairs[i]).collect();
    let p = pairs.len();
    let norm = 1.0 / ((m + p).max(1) as f64).sqrt();

    let mut class_w: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut questions = BTreeMap::new();
    for s in bank.scenarios() {
        for q in s.target_questions() {
            let mut qrng = seeding::rng_for(
                spec.seed,
                &[b"choice-question", s.id.as_bytes(), q.id.as_bytes()],
            );
            let mut linear = Vec::with_capacity(q.options.len());
            let mut pairwise = Vec::with_capacity(q.options.len());
            for o in &q.options {
                let label = o.class_label();
                let (base_l, base_p) = class_w
                    .entry(label.clone())
                    .or_insert_with(|| {
                        let mut r =
                            seeding::rng_for(spec.seed, &[b"choice-class", label.as_bytes()]);
                        (normal_vec(&mut r, m), normal_vec(&mut r, p))
                    })
                    .clone();
                let dl = normal_vec(&mut qrng, m);
                let dp = normal_vec(&mut qrng, p);
                let mut row = vec![0.0; k];
                for j in 0..m {
                    row[j] = norm * (base_l[j] + spec.specificity * dl[j]);
                }
                linear.push(row);
                pairwise.push(
                    (0..p)
                        .map(|j| norm * (base_p[j] + spec.specificity * dp[j]))
                        .collect(),
                );
            }
            questions.insert(
                key(&s.id, &q.id),
                QuestionUtility {
                    scenario: s.id.clone(),
                    qid: q.id.clone(),
                    linear,
                    pairwise,
                },
            );
        }
    }
    let mut model = ChoiceModel {
        k,
        informative: m,
        tau: spec.tau,
        seed: spec.seed,
        scale: 1.0,
        pairs,
        questions,
        bayes_accuracy: None,
    };
    if let Some(target) = spec.target_bayes {
        calibrate(&mut model, target)?;
    }
    Ok(model)
}

/// Raw utilities for a fixed set of (z, question) draws.
fn calibration_draws(model: &ChoiceModel, draws: usize, seed: u64, domain: &str) -> Vec<Vec<f64>> {
    let keys: Vec<&QuestionUtility> = model.questions.values().collect();
    (0..draws)
        .map(|i| {
            let mut rng = seeding::rng_indexed(seed, domain, i as u64);
            let z = normal_vec(&mut rng, model.k);
            let q = keys[rng.gen_range(0..keys.len())];
            model.utilities(q, &z)
        })
        .collect()
}

fn expected_max(us: &[Vec<f64>], scale: f64, tau: f64) -> f64 {
    let total: f64 = us
        .iter()
        .map(|u| {
            let scaled: Vec<f64> = u.iter().map(|v| v * scale).collect();
            softmax(&scaled, tau).into_iter().fold(0.0, f64::max)
        })
        .sum();
    total / us.len() as f64
}

fn calibrate(model: &mut ChoiceModel, target: f64) -> Result<(), SynthError> {
    let fail = |reason: &str| SynthError::Target {
        target,
        reason: reason.into(),
    };
    if model.questions.is_empty() {
        return Err(fail("bank has no multiple-choice questions"));
    }
    if model.tau == 0.0 {
        return Err(fail("temperature 0 makes the Bayes accuracy 1"));
    }
    if model.is_zero() {
        return Err(fail("model has no informative weights"));
    }
    let us = calibration_draws(model, CALIBRATION_DRAWS, model.seed, "choice-calibration");
    let floor = expected_max(&us, 0.0, model.tau);
    if target <= floor || target >= 1.0 {
        return Err(fail(&format!("must lie in ({floor:.3}, 1)")));
    }
    // E[max p] is non-decreasing in the scale, so bisect on it
    let mut hi = 1.0;
    let mut doublings = 0;
    while expected_max(&us, hi, model.tau) < target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 40 {
            return Err(fail("scale search diverged"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if expected_max(&us, mid, model.tau) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    for q in model.questions.values_mut() {
        for row in q.linear.iter_mut().chain(q.pairwise.iter_mut()) {
            for w in row {
                *w *= s;
            }
        }
    }
    model.scale = s;
    model.bayes_accuracy = Some(expected_max(&us, s, model.tau));
    Ok(())
}

/// E[max_j p_j(z)] over fresh draws: the accuracy of the Bayes-optimal
/// predictor under the model.
pub fn estimate_bayes_accuracy(model: &ChoiceModel, draws: usize, seed: u64) -> f64 {
    expected_max(
        &calibration_draws(model, draws, seed, "choice-estimate"),
        1.0,
        model.tau,
    )
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

/// Monte Carlo estimate (nats) of I(z_1..z_j ; y) for one question:
/// `H(E[p]) - E_outer[H(E_inner[p])]`, where the inner average integrates
/// out traits `j..K` for each outer draw of the first `j`.
pub fn mutual_information_prefix(
    model: &ChoiceModel,
    q: &QuestionUtility,
    j: usize,
    outer: usize,
    inner: usize,
    seed: u64,
) -> f64 {
    let n_opt = q.linear.len();
    let mut marginal = vec![0.0; n_opt];
    let mut cond_h = 0.0;
    for o in 0..outer {
        let mut rng = seeding::rng_indexed(seed, "mi-outer", o as u64);
        let prefix = normal_vec(&mut rng, j.min(model.k));
        let mut cond = vec![0.0; n_opt];
        for i in 0..inner {
            let mut r = seeding::rng_indexed(
                seed ^ (o as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                "mi-inner",
                i as u64,
            );
            let mut z = prefix.clone();
            z.extend(normal_vec(&mut r, model.k - prefix.len()));
            for (c, p) in cond.iter_mut().zip(model.probabilities(q, &z)) {
                *c += p / inner as f64;
            }
        }
        cond_h += entropy(&cond) / outer as f64;
        for (m, c) in marginal.iter_mut().zip(&cond) {
            *m += c / outer as f64;
        }
    }
    entropy(&marginal) - cond_h
}
