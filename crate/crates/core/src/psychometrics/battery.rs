//! The instrument battery: loading, norm resolution, and cohort scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::binning::{BinningError, BinningRule, BinningSpec, InputScale};
use super::instrument::{
    score_instrument, standardize, InstrumentSpec, ItemResponses, Norm, ScoreError, SpecError,
};
use super::profile::{
    build_profile, Demographics, ProfileError, TraitOrder, TraitProfile, TraitScore,
};

pub const SHIPPED_BATTERY: &str = include_str!("../../config/battery.json");

#[derive(Debug, thiserror::Error)]
pub enum BatteryError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {what}: {source}")]
    Json {
        what: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported schema_version {0}")]
    SchemaVersion(u32),
    #[error("duplicate instrument id {0:?}")]
    DuplicateInstrument(String),
    #[error("trait {trait_id:?} defined by both {first} and {second}")]
    DuplicateTrait {
        trait_id: String,
        first: String,
        second: String,
    },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("trait {0:?} is binned on a standardized scale but has no norm (add one to the norm table or use cohort standardization)")]
    MissingNorm(String),
    #[error("trait {trait_id:?}: {source}")]
    Fit {
        trait_id: String,
        #[source]
        source: BinningError,
    },
    #[error("trait {trait_id:?}: cohort standard deviation is zero")]
    DegenerateCohort { trait_id: String },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("participant {0:?} has responses but no demographics")]
    MissingDemographics(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub schema_version: u32,
    pub instruments: Vec<InstrumentSpec>,
}

/// Per-trait population norms, kept outside the battery file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTable {
    pub schema_version: u32,
    pub norms: BTreeMap<String, Norm>,
}

/// Where standardization parameters come from.
#[derive(Debug, Clone, PartialEq)]
pub enum NormSource {
    /// Inline instrument norms, then this table.
    Table(NormTable),
    /// Sample mean/sd of the scored cohort (default for synthetic runs).
    CohortInternal,
}

/// Norms and fitted rules actually used for a scoring run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringSnapshot {
    pub norms: BTreeMap<String, Norm>,
    pub rules: BTreeMap<String, BinningRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantInfo {
    pub participant_id: String,
    pub age: f64,
    pub sex: String,
}

fn read(path: &Path) -> Result<String, BatteryError> {
    std::fs::read_to_string(path).map_err(|source| BatteryError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl Battery {
    pub fn from_json(text: &str) -> Result<Self, BatteryError> {
        let battery: Battery = serde_json::from_str(text).map_err(|source| BatteryError::Json {
            what: "battery".into(),
            source,
        })?;
        battery.validate()?;
        Ok(battery)
    }

    pub fn load(path: &Path) -> Result<Self, BatteryError> {
        Self::from_json(&read(path)?)
    }

    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_BATTERY).expect("shipped battery is valid")
    }

    pub fn validate(&self) -> Result<(), BatteryError> {
        if self.schema_version != crate::SCHEMA_VERSION {
            return Err(BatteryError::SchemaVersion(self.schema_version));
        }
        let mut ids = BTreeSet::new();
        let mut owners: BTreeMap<&str, &str> = BTreeMap::new();
        for inst in &self.instruments {
            if !ids.insert(inst.id.as_str()) {
                return Err(BatteryError::DuplicateInstrument(inst.id.clone()));
            }
            inst.validate()?;
            for trait_id in inst.subscales.keys() {
                if let Some(first) = owners.insert(trait_id, &inst.id) {
                    return Err(BatteryError::DuplicateTrait {
                        trait_id: trait_id.clone(),
                        first: first.to_string(),
                        second: inst.id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn instrument(&self, id: &str) -> Option<&InstrumentSpec> {
        self.instruments.iter().find(|i| i.id == id)
    }

    pub fn trait_ids(&self) -> Vec<String> {
        self.instruments
            .iter()
            .flat_map(|i| i.subscales.keys().cloned())
            .collect()
    }

    /// Load-time check that every standardized-scale trait has a norm.
    pub fn check_norms(&self, source: &NormSource) -> Result<(), BatteryError> {
        let table = match source {
            NormSource::CohortInternal => return Ok(()),
            NormSource::Table(t) => t,
        };
        for inst in &self.instruments {
            for (trait_id, def) in &inst.subscales {
                if def.binning.kind().needs_norm()
                    && def.norm.is_none()
                    && !table.norms.contains_key(trait_id)
                {
                    return Err(BatteryError::MissingNorm(trait_id.clone()));
                }
            }
        }
        Ok(())
    }

    /// Score a cohort into profiles.
    ///
    /// Raw scores are computed first so that cohort-internal norms and
    /// quantile cutoffs can be fitted on the whole cohort; the fitted values
    /// are returned in the snapshot.
    pub fn score_cohort(
        &self,
        participants: &[ParticipantInfo],
        responses: &[ItemResponses],
        source: &NormSource,
        order: &TraitOrder,
    ) -> Result<(Vec<TraitProfile>, ScoringSnapshot), BatteryError> {
        self.check_norms(source)?;
        let known: BTreeSet<&str> = participants
            .iter()
            .map(|p| p.participant_id.as_str())
            .collect();
        let mut raw: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
        for r in responses {
            if !known.contains(r.participant_id.as_str()) {
                return Err(BatteryError::MissingDemographics(r.participant_id.clone()));
            }
            let inst =
                self.instrument(&r.instrument_id)
                    .ok_or_else(|| ScoreError::UnknownInstrument {
                        participant: r.participant_id.clone(),
                        instrument: r.instrument_id.clone(),
                    })?;
            raw.entry(&r.participant_id)
                .or_default()
                .extend(score_instrument(inst, r)?);
        }

        let mut snapshot = ScoringSnapshot {
            norms: BTreeMap::new(),
            rules: BTreeMap::new(),
        };
        for inst in &self.instruments {
            for (trait_id, def) in &inst.subscales {
                let values: Vec<f64> = raw
                    .values()
                    .filter_map(|m| m.get(trait_id).copied())
                    .collect();
                let norm = match source {
                    NormSource::Table(table) => {
                        def.norm.or_else(|| table.norms.get(trait_id).copied())
                    }
                    NormSource::CohortInternal => {
                        if values.len() < 2 {
                            None
                        } else {
                            let (mean, sd) = mean_sd(&values);
                            if sd > 0.0 {
                                Some(Norm { mean, sd })
                            } else if def.binning.kind().needs_norm() {
                                return Err(BatteryError::DegenerateCohort {
                                    trait_id: trait_id.clone(),
                                });
                            } else {
                                None
                            }
                        }
                    }
                };
                if let Some(n) = norm {
                    snapshot.norms.insert(trait_id.clone(), n);
                }
                let spec: BinningSpec = if def.binning.is_fitted() {
                    def.binning.clone()
                } else {
                    def.binning
                        .fit(&values)
                        .map_err(|source| BatteryError::Fit {
                            trait_id: trait_id.clone(),
                            source,
                        })?
                };
                let rule = spec.resolve().map_err(|source| BatteryError::Fit {
                    trait_id: trait_id.clone(),
                    source,
                })?;
                snapshot.rules.insert(trait_id.clone(), rule);
            }
        }

        let mut profiles = Vec::with_capacity(participants.len());
        for p in participants {
            let empty = BTreeMap::new();
            let scores: Vec<TraitScore> = raw
                .get(p.participant_id.as_str())
                .unwrap_or(&empty)
                .iter()
                .map(|(trait_id, &value)| score_trait(trait_id, value, &snapshot))
                .collect::<Result<_, _>>()?;
            let demo = Demographics {
                age: p.age,
                sex: p.sex.clone(),
            };
            profiles.push(build_profile(&p.participant_id, &demo, &scores, order)?);
        }
        Ok((profiles, snapshot))
    }
}

fn score_trait(
    trait_id: &str,
    raw: f64,
    snapshot: &ScoringSnapshot,
) -> Result<TraitScore, BatteryError> {
    let rule = &snapshot.rules[trait_id];
    let z = snapshot.norms.get(trait_id).map(|&n| standardize(raw, n));
    let input = match rule.input_scale() {
        InputScale::Raw => raw,
        InputScale::Z => z.ok_or_else(|| BatteryError::MissingNorm(trait_id.to_string()))?,
        InputScale::TScore => {
            50.0 + 10.0 * z.ok_or_else(|| BatteryError::MissingNorm(trait_id.to_string()))?
        }
    };
    Ok(TraitScore {
        trait_id: trait_id.to_string(),
        raw,
        z,
        bin: rule.bin(input).to_string(),
    })
}

/// Single-pass (Welford) mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = values.len();
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    (mean, var.sqrt())
}

impl NormTable {
    pub fn load(path: &Path) -> Result<Self, BatteryError> {
        let table: NormTable =
            serde_json::from_str(&read(path)?).map_err(|source| BatteryError::Json {
                what: path.display().to_string(),
                source,
            })?;
        if table.schema_version != crate::SCHEMA_VERSION {
            return Err(BatteryError::SchemaVersion(table.schema_version));
        }
        if let Some((t, n)) = table.norms.iter().find(|(_, n)| !(n.sd > 0.0)) {
            return Err(BatteryError::Spec(SpecError::NormSd {
                instrument: "norm table".into(),
                trait_id: t.clone(),
                sd: n.sd,
            }));
        }
        Ok(table)
    }
}
