//! Participant-level bootstrap.
//!
//! Participants are sorted by id; resample `r` draws participant indices from
//! a stream keyed by `(seed, r)`, so results do not depend on input order or
//! thread scheduling.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{
    class_count, confusion, scores, Confusion, FailurePolicy, LabeledPrediction, Metric,
    MetricError,
};
use crate::psychometrics::nearest_rank;
use crate::seeding;

pub const PERCENTILES: [f64; 5] = [2.5, 25.0, 50.0, 75.0, 97.5];
pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: Metric,
    /// Metric on the full, unresampled data.
    pub point: f64,
    pub mean: f64,
    pub std: f64,
    /// Nearest-rank values at [`PERCENTILES`].
    pub percentiles: [f64; 5],
    pub n_resamples: usize,
    pub seed: u64,
    pub parse_failure_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub seed: u64,
    pub policy: FailurePolicy,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_resamples: DEFAULT_RESAMPLES,
            seed: 0,
            policy: FailurePolicy::AsWrong,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BootstrapError {
    #[error("no predictions to resample")]
    Empty,
    #[error("n_resamples must be at least 1")]
    NoResamples,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Predictions grouped by participant, ids sorted.
fn by_participant(preds: &[LabeledPrediction]) -> Vec<Vec<&LabeledPrediction>> {
    let mut groups: BTreeMap<&str, Vec<&LabeledPrediction>> = BTreeMap::new();
    for p in preds {
        groups.entry(&p.participant_id).or_default().push(p);
    }
    groups.into_values().collect()
}

/// Multiplicity of each participant in resample `r`.
fn draw_counts(seed: u64, r: usize, n: usize) -> Vec<u32> {
    let mut rng = seeding::rng_indexed(seed, "bootstrap", r as u64);
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.gen_range(0..n)] += 1;
    }
    counts
}

/// Mean and sample std, shifted by the first value so a constant series
/// gives exactly that value and 0.
fn summarize(values: &[f64]) -> (f64, f64) {
    let x0 = values[0];
    let n = values.len() as f64;
    let (mut s, mut ss) = (0.0, 0.0);
    for &v in values {
        let d = v - x0;
        s += d;
        ss += d * d;
    }
    let mean = x0 + s / n;
    let std = if values.len() > 1 {
        ((ss - s * s / n) / (n - 1.0)).max(0.0).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn finish(
    metric: Metric,
    point: f64,
    mut values: Vec<f64>,
    cfg: &BootstrapConfig,
    failure_rate: f64,
) -> MetricResult {
    let (mean, std) = summarize(&values);
    values.sort_by(f64::total_cmp);
    let percentiles = PERCENTILES.map(|p| nearest_rank(&values, p / 100.0));
    MetricResult {
        metric,
        point,
        mean,
        std,
        percentiles,
        n_resamples: cfg.n_resamples,
        seed: cfg.seed,
        parse_failure_rate: failure_rate,
    }
}

fn failure_rate(preds: &[LabeledPrediction]) -> f64 {
    preds.iter().filter(|p| p.predicted.is_none()).count() as f64 / preds.len() as f64
}

/// Generic bootstrap of any metric over the pooled predictions of a
/// resample. Each drawn participant contributes all of its predictions.
pub fn bootstrap<F>(
    preds: &[LabeledPrediction],
    metric: Metric,
    metric_fn: F,
    cfg: &BootstrapConfig,
) -> Result<MetricResult, BootstrapError>
where
    F: Fn(&[&LabeledPrediction]) -> Result<f64, MetricError> + Sync,
{
    if preds.is_empty() {
        return Err(BootstrapError::Empty);
    }
    if cfg.n_resamples == 0 {
        return Err(BootstrapError::NoResamples);
    }
    let groups = by_participant(preds);
    let all: Vec<&LabeledPrediction> = groups.iter().flatten().copied().collect();
    let point = metric_fn(&all)?;
    let values: Vec<f64> = (0..cfg.n_resamples)
        .into_par_iter()
        .map(|r| {
            let counts = draw_counts(cfg.seed, r, groups.len());
            let mut sample = Vec::new();
            for (g, &c) in groups.iter().zip(&counts) {
                for _ in 0..c {
                    sample.extend(g.iter().copied());
                }
            }
            assert!(
                !sample.is_empty(),
                "every participant has at least one prediction"
            );
            metric_fn(&sample)
        })
        .collect::<Result<_, _>>()?;
    Ok(finish(metric, point, values, cfg, failure_rate(preds)))
}

/// All three pooled metrics at once, summing per-participant confusion
/// matrices instead of re-tallying predictions. Equal to [`bootstrap`] with
/// the pooled metric functions.
pub fn bootstrap_all(
    preds: &[LabeledPrediction],
    cfg: &BootstrapConfig,
) -> Result<[MetricResult; 3], BootstrapError> {
    if preds.is_empty() {
        return Err(BootstrapError::Empty);
    }
    if cfg.n_resamples == 0 {
        return Err(BootstrapError::NoResamples);
    }
    let k = class_count(preds);
    let groups = by_participant(preds);
    let mats: Vec<Confusion> = groups
        .iter()
        .map(|g| confusion(g.iter().copied(), k, cfg.policy))
        .collect::<Result<_, _>>()?;
    let mut full = Confusion::zeros(k);
    for m in &mats {
        full.add(m);
    }
    let point = scores(&full)?;
    let per: Vec<[f64; 3]> = (0..cfg.n_resamples)
        .into_par_iter()
        .map(|r| {
            let counts = draw_counts(cfg.seed, r, mats.len());
            let mut m = Confusion::zeros(k);
            for (pm, &c) in mats.iter().zip(&counts) {
                if c > 0 {
                    m.add_scaled(pm, u64::from(c));
                }
            }
            let s = scores(&m)?;
            Ok(Metric::ALL.map(|metric| metric.of(&s)))
        })
        .collect::<Result<_, MetricError>>()?;
    let rate = failure_rate(preds);
    Ok([0, 1, 2].map(|i| {
        let metric = Metric::ALL[i];
        finish(
            metric,
            metric.of(&point),
            per.iter().map(|v| v[i]).collect(),
            cfg,
            rate,
        )
    }))
}

/// Pooled metric function for use with [`bootstrap`].
pub fn pooled(
    metric: Metric,
    policy: FailurePolicy,
) -> impl Fn(&[&LabeledPrediction]) -> Result<f64, MetricError> + Sync {
    move |preds: &[&LabeledPrediction]| {
        let k = class_count(preds.iter().copied());
        let m = confusion(preds.iter().copied(), k, policy)?;
        Ok(metric.of(&scores(&m)?))
    }
}
