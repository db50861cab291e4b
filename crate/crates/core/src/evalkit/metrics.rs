use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub participant_id: String,
    pub scenario_id: String,
    pub qid: String,
    /// `None` marks a parse failure.
    pub predicted: Option<u32>,
    pub truth: u32,
    pub option_count: u32,
}

/// How parse failures enter the confusion matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Counted in a separate failure column, so always wrong.
    #[default]
    AsWrong,
    /// Dropped before scoring.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("{participant}/{scenario}/{qid}: option count {count} exceeds class count {classes}")]
    ClassCount {
        participant: String,
        scenario: String,
        qid: String,
        count: u32,
        classes: usize,
    },
    #[error("{participant}/{scenario}/{qid}: {what} {value} outside 1..={count}")]
    OutOfRange {
        participant: String,
        scenario: String,
        qid: String,
        what: &'static str,
        value: u32,
        count: u32,
    },
    #[error("no predictions to score")]
    Empty,
}

/// Pooled confusion matrix. Classes are option indices `1..=k`; row is the
/// truth, column the prediction, and column `k` holds parse failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    k: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * (k + 1)],
        }
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    /// `truth` and `predicted` are 1-based; `None` is a failure.
    pub fn get(&self, truth: usize, predicted: Option<usize>) -> u64 {
        self.counts[self.cell(truth, predicted)]
    }

    fn cell(&self, truth: usize, predicted: Option<usize>) -> usize {
        let col = predicted.map(|p| p - 1).unwrap_or(self.k);
        (truth - 1) * (self.k + 1) + col
    }

    pub fn record(&mut self, truth: u32, predicted: Option<u32>) {
        let c = self.cell(truth as usize, predicted.map(|p| p as usize));
        self.counts[c] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn failures(&self) -> u64 {
        (1..=self.k).map(|t| self.get(t, None)).sum()
    }

    pub fn add(&mut self, other: &Confusion) {
        self.add_scaled(other, 1);
    }

    pub fn add_scaled(&mut self, other: &Confusion, times: u64) {
        assert_eq!(self.k, other.k, "confusion matrices of different size");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b * times;
        }
    }

    /// Row-major `k x (k + 1)` counts, failure column last.
    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k + 1).map(|c| c.to_vec()).collect()
    }
}

fn check(p: &LabeledPrediction, classes: usize) -> Result<(), MetricError> {
    let ids = || {
        (
            p.participant_id.clone(),
            p.scenario_id.clone(),
            p.qid.clone(),
        )
    };
    if p.option_count as usize > classes {
        let (participant, scenario, qid) = ids();
        return Err(MetricError::ClassCount {
            participant,
            scenario,
            qid,
            count: p.option_count,
            classes,
        });
    }
    for (what, value) in [("truth", Some(p.truth)), ("prediction", p.predicted)] {
        if let Some(v) = value {
            if v == 0 || v > p.option_count {
                let (participant, scenario, qid) = ids();
                return Err(MetricError::OutOfRange {
                    participant,
                    scenario,
                    qid,
                    what,
                    value: v,
                    count: p.option_count,
                });
            }
        }
    }
    Ok(())
}

/// Tally predictions over option classes `1..=classes`.
pub fn confusion<'a, I>(
    preds: I,
    classes: usize,
    policy: FailurePolicy,
) -> Result<Confusion, MetricError>
where
    I: IntoIterator<Item = &'a LabeledPrediction>,
{
    let mut m = Confusion::zeros(classes);
    for p in preds {
        check(p, classes)?;
        if p.predicted.is_none() && policy == FailurePolicy::Exclude {
            continue;
        }
        m.record(p.truth, p.predicted);
    }
    Ok(m)
}

/// Largest option count among the predictions (at least 1).
pub fn class_count<'a>(preds: impl IntoIterator<Item = &'a LabeledPrediction>) -> usize {
    preds
        .into_iter()
        .map(|p| p.option_count as usize)
        .max()
        .unwrap_or(1)
        .max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    BalancedAccuracy,
    MacroF1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Accuracy, Metric::BalancedAccuracy, Metric::MacroF1];

    /// Display name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Metric::Accuracy => "Accuracy",
            Metric::BalancedAccuracy => "Balanced Accuracy",
            Metric::MacroF1 => "Macro-F1",
        }
    }

    pub fn from_label(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.label() == s)
    }

    pub fn of(self, s: &Scores) -> f64 {
        match self {
            Metric::Accuracy => s.accuracy,
            Metric::BalancedAccuracy => s.balanced_accuracy,
            Metric::MacroF1 => s.macro_f1,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub macro_f1: f64,
}

/// Accuracy, balanced accuracy and macro-F1. The class set for the last two
/// is every class with ground-truth support; a class never predicted has
/// precision 0, and F1 is 0 when precision + recall is 0.
pub fn scores(m: &Confusion) -> Result<Scores, MetricError> {
    let total = m.total();
    if total == 0 {
        return Err(MetricError::Empty);
    }
    let k = m.classes();
    let mut trace = 0u64;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut supported = 0usize;
    for c in 1..=k {
        let tp = m.get(c, Some(c));
        trace += tp;
        let support: u64 = (1..=k).map(|p| m.get(c, Some(p))).sum::<u64>() + m.get(c, None);
        if support == 0 {
            continue;
        }
        supported += 1;
        let predicted: u64 = (1..=k).map(|t| m.get(t, Some(c))).sum();
        let recall = tp as f64 / support as f64;
        let precision = if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        recall_sum += recall;
        f1_sum += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    Ok(Scores {
        accuracy: trace as f64 / total as f64,
        balanced_accuracy: recall_sum / supported as f64,
        macro_f1: f1_sum / supported as f64,
    })
}

/// Variant that scores each (scenario, question) separately and averages
/// the three metrics with equal weight per question.
pub fn scores_per_question(
    preds: &[&LabeledPrediction],
    policy: FailurePolicy,
) -> Result<Scores, MetricError> {
    let mut groups: BTreeMap<(&str, &str), Vec<&LabeledPrediction>> = BTreeMap::new();
    for p in preds {
        groups.entry((&p.scenario_id, &p.qid)).or_default().push(p);
    }
    let mut acc = Scores {
        accuracy: 0.0,
        balanced_accuracy: 0.0,
        macro_f1: 0.0,
    };
    let mut n = 0usize;
    for group in groups.values() {
        let m = confusion(
            group.iter().copied(),
            class_count(group.iter().copied()),
            policy,
        )?;
        if m.total() == 0 {
            continue;
        }
        let s = scores(&m)?;
        acc.accuracy += s.accuracy;
        acc.balanced_accuracy += s.balanced_accuracy;
        acc.macro_f1 += s.macro_f1;
        n += 1;
    }
    if n == 0 {
        return Err(MetricError::Empty);
    }
    let n = n as f64;
    Ok(Scores {
        accuracy: acc.accuracy / n,
        balanced_accuracy: acc.balanced_accuracy / n,
        macro_f1: acc.macro_f1 / n,
    })
}
