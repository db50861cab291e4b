//! Instrument definitions and raw scoring.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::binning::{BinningError, BinningSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Mean,
}

/// Population norm used to standardize a trait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norm {
    pub mean: f64,
    pub sd: f64,
}

/// One trait scored from a subset of an instrument's items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitDef {
    /// 1-based item indices.
    pub items: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<Norm>,
    pub binning: BinningSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentSpec {
    pub id: String,
    pub name: String,
    pub item_count: usize,
    pub scale_min: i32,
    pub scale_max: i32,
    /// 1-based indices of reverse-coded items.
    #[serde(default)]
    pub reverse_items: BTreeSet<usize>,
    pub aggregation: Aggregation,
    /// trait id -> definition
    pub subscales: BTreeMap<String, TraitDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResponses {
    pub participant_id: String,
    pub instrument_id: String,
    pub responses: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("{instrument}: scale_min {min} must be below scale_max {max}")]
    Scale {
        instrument: String,
        min: i32,
        max: i32,
    },
    #[error("{instrument}: item_count must be positive")]
    NoItems { instrument: String },
    #[error("{instrument}/{context}: item index {item} outside 1..={item_count}")]
    ItemIndex {
        instrument: String,
        context: String,
        item: usize,
        item_count: usize,
    },
    #[error("{instrument}/{trait_id}: subscale has no items")]
    EmptySubscale {
        instrument: String,
        trait_id: String,
    },
    #[error("{instrument}/{trait_id}: norm sd must be positive, got {sd}")]
    NormSd {
        instrument: String,
        trait_id: String,
        sd: f64,
    },
    #[error("{instrument}/{trait_id}: {source}")]
    Binning {
        instrument: String,
        trait_id: String,
        #[source]
        source: BinningError,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("participant {participant}: unknown instrument {instrument:?}")]
    UnknownInstrument {
        participant: String,
        instrument: String,
    },
    #[error("participant {participant}, {instrument}: expected {expected} responses, got {got} (first missing item {first_missing})")]
    LengthMismatch {
        participant: String,
        instrument: String,
        expected: usize,
        got: usize,
        first_missing: usize,
    },
    #[error("participant {participant}, {instrument}: item {item} response {value} outside {min}..={max}")]
    OutOfRange {
        participant: String,
        instrument: String,
        item: usize,
        value: i32,
        min: i32,
        max: i32,
    },
}

/// Reverse-code a response: `min + max - value`.
pub fn reverse_code(value: i32, scale_min: i32, scale_max: i32) -> i32 {
    scale_min + scale_max - value
}

/// z = (raw - mean) / sd
pub fn standardize(raw: f64, norm: Norm) -> f64 {
    debug_assert!(norm.sd > 0.0);
    (raw - norm.mean) / norm.sd
}

impl InstrumentSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.scale_min >= self.scale_max {
            return Err(SpecError::Scale {
                instrument: self.id.clone(),
                min: self.scale_min,
                max: self.scale_max,
            });
        }
        if self.item_count == 0 {
            return Err(SpecError::NoItems {
                instrument: self.id.clone(),
            });
        }
        let in_range = |item: usize| (1..=self.item_count).contains(&item);
        if let Some(&item) = self.reverse_items.iter().find(|&&i| !in_range(i)) {
            return Err(SpecError::ItemIndex {
                instrument: self.id.clone(),
                context: "reverse_items".into(),
                item,
                item_count: self.item_count,
            });
        }
        for (trait_id, def) in &self.subscales {
            if def.items.is_empty() {
                return Err(SpecError::EmptySubscale {
                    instrument: self.id.clone(),
                    trait_id: trait_id.clone(),
                });
            }
            if let Some(&item) = def.items.iter().find(|&&i| !in_range(i)) {
                return Err(SpecError::ItemIndex {
                    instrument: self.id.clone(),
                    context: trait_id.clone(),
                    item,
                    item_count: self.item_count,
                });
            }
            if let Some(norm) = def.norm {
                if !(norm.sd > 0.0) {
                    return Err(SpecError::NormSd {
                        instrument: self.id.clone(),
                        trait_id: trait_id.clone(),
                        sd: norm.sd,
                    });
                }
            }
            def.binning
                .validate()
                .map_err(|source| SpecError::Binning {
                    instrument: self.id.clone(),
                    trait_id: trait_id.clone(),
                    source,
                })?;
        }
        Ok(())
    }

    /// Check a response vector against this spec.
    pub fn check(&self, responses: &ItemResponses) -> Result<(), ScoreError> {
        if responses.instrument_id != self.id {
            return Err(ScoreError::UnknownInstrument {
                participant: responses.participant_id.clone(),
                instrument: responses.instrument_id.clone(),
            });
        }
        if responses.responses.len() != self.item_count {
            return Err(ScoreError::LengthMismatch {
                participant: responses.participant_id.clone(),
                instrument: self.id.clone(),
                expected: self.item_count,
                got: responses.responses.len(),
                first_missing: responses.responses.len().min(self.item_count) + 1,
            });
        }
        for (i, &value) in responses.responses.iter().enumerate() {
            if value < self.scale_min || value > self.scale_max {
                return Err(ScoreError::OutOfRange {
                    participant: responses.participant_id.clone(),
                    instrument: self.id.clone(),
                    item: i + 1,
                    value,
                    min: self.scale_min,
                    max: self.scale_max,
                });
            }
        }
        Ok(())
    }
}

/// Raw subscale scores for one response vector, reverse-coding first.
pub fn score_instrument(
    spec: &InstrumentSpec,
    responses: &ItemResponses,
) -> Result<BTreeMap<String, f64>, ScoreError> {
    spec.check(responses)?;
    let coded: Vec<i32> = responses
        .responses
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if spec.reverse_items.contains(&(i + 1)) {
                reverse_code(v, spec.scale_min, spec.scale_max)
            } else {
                v
            }
        })
        .collect();
    Ok(spec
        .subscales
        .iter()
        .map(|(trait_id, def)| {
            let total: i64 = def
                .items
                .iter()
                .map(|&item| i64::from(coded[item - 1]))
                .sum();
            let raw = match spec.aggregation {
                Aggregation::Sum => total as f64,
                Aggregation::Mean => total as f64 / def.items.len() as f64,
            };
            (trait_id.clone(), raw)
        })
        .collect())
}
