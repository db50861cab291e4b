//! Held-out scenario split. The split unit is the scenario: every
//! participant can appear on both sides, but no scenario does.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Bank, ResponseRecord};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSplit {
    pub train_ids: BTreeSet<String>,
    pub eval_ids: BTreeSet<String>,
    pub seed: u64,
    pub ratio: f64,
    #[serde(default)]
    pub stratified: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("split ratio must be strictly between 0 and 1, got {0}")]
    Ratio(f64),
    #[error("ratio {ratio} on {n} scenarios leaves the {side} side empty")]
    EmptySide {
        ratio: f64,
        n: usize,
        side: &'static str,
    },
}

/// A record from a training scenario reached an evaluation computation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("scenario {scenario_id:?} (participant {participant_id:?}) is not in the evaluation split")]
pub struct EvalLeak {
    pub participant_id: String,
    pub scenario_id: String,
}

/// floor(ratio * n), tolerant of representation error just below an integer.
fn train_size(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Seeded split with |train| = floor(ratio * N). The optional stratified
/// mode allocates the train quota proportionally within each
/// (scenario type, domain) cell by largest remainder.
pub fn split_scenarios(
    bank: &Bank,
    ratio: f64,
    seed: u64,
    stratified: bool,
) -> Result<ScenarioSplit, SplitError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(SplitError::Ratio(ratio));
    }
    let n = bank.len();
    let n_train = train_size(ratio, n);
    if n_train == 0 {
        return Err(SplitError::EmptySide {
            ratio,
            n,
            side: "train",
        });
    }
    if n_train >= n {
        return Err(SplitError::EmptySide {
            ratio,
            n,
            side: "eval",
        });
    }

    let train_ids: BTreeSet<String> = if stratified {
        let mut cells: BTreeMap<_, Vec<String>> = BTreeMap::new();
        for s in bank.scenarios() {
            cells
                .entry((s.scenario_type, s.domain))
                .or_default()
                .push(s.id.clone());
        }
        // proportional quotas, remainders handed out largest first
        let mut quotas: Vec<(usize, f64, usize)> = cells
            .values()
            .enumerate()
            .map(|(i, ids)| {
                let exact = ids.len() as f64 * n_train as f64 / n as f64;
                (exact.floor() as usize, exact - exact.floor(), i)
            })
            .collect();
        let assigned: usize = quotas.iter().map(|q| q.0).sum();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1).then(a.cmp(&b)));
        for &i in order.iter().take(n_train - assigned) {
            quotas[i].0 += 1;
        }
        let mut train = BTreeSet::new();
        for ((key, ids), (quota, _, _)) in cells.iter().zip(&quotas) {
            let mut ids = ids.clone();
            ids.sort();
            let label = format!("{:?}/{:?}", key.0, key.1);
            let mut rng = seeding::rng_for(seed, &[b"split-stratum", label.as_bytes()]);
            ids.shuffle(&mut rng);
            train.extend(ids.into_iter().take(*quota));
        }
        train
    } else {
        let mut ids: Vec<String> = bank.ids().map(String::from).collect();
        ids.sort();
        let mut rng = seeding::rng_for(seed, &[b"split"]);
        ids.shuffle(&mut rng);
        ids.into_iter().take(n_train).collect()
    };
    let eval_ids = bank
        .ids()
        .filter(|id| !train_ids.contains(*id))
        .map(String::from)
        .collect();
    Ok(ScenarioSplit {
        train_ids,
        eval_ids,
        seed,
        ratio,
        stratified,
    })
}

/// `count` independent splits with seeds derived from `seed`.
pub fn repeated_splits(
    bank: &Bank,
    ratio: f64,
    seed: u64,
    count: usize,
    stratified: bool,
) -> Result<Vec<ScenarioSplit>, SplitError> {
    (0..count as u64)
        .map(|i| split_scenarios(bank, ratio, seed.wrapping_add(i), stratified))
        .collect()
}

impl ScenarioSplit {
    pub fn is_eval(&self, scenario_id: &str) -> bool {
        self.eval_ids.contains(scenario_id)
    }

    pub fn is_train(&self, scenario_id: &str) -> bool {
        self.train_ids.contains(scenario_id)
    }

    /// Guard used at scoring time.
    pub fn assert_eval(&self, participant_id: &str, scenario_id: &str) -> Result<(), EvalLeak> {
        if self.is_eval(scenario_id) {
            Ok(())
        } else {
            Err(EvalLeak {
                participant_id: participant_id.to_string(),
                scenario_id: scenario_id.to_string(),
            })
        }
    }
}

/// The only way records enter evaluation: filtered to held-out scenarios.
pub fn eval_records<'a>(
    records: &'a [ResponseRecord],
    split: &ScenarioSplit,
) -> Vec<&'a ResponseRecord> {
    records
        .iter()
        .filter(|r| split.is_eval(&r.scenario_id))
        .collect()
}

pub fn train_records<'a>(
    records: &'a [ResponseRecord],
    split: &ScenarioSplit,
) -> Vec<&'a ResponseRecord> {
    records
        .iter()
        .filter(|r| split.is_train(&r.scenario_id))
        .collect()
}
