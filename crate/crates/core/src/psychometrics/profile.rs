//! Trait profiles: ordered, binned trait vectors plus demographics.

use std::collections::{BTreeMap, BTreeSet};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, Header, JsonlError};

/// Maximum profile dimensionality of the shipped battery.
pub const MAX_TRAITS: usize = 74;

/// The Big Five, in canonical prompt order.
pub const BIG_FIVE: [&str; 5] = [
    "Neuroticism",
    "Extraversion",
    "Openness",
    "Agreeableness",
    "Conscientiousness",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitScore {
    pub trait_id: String,
    pub raw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    pub bin: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: f64,
    pub sex: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitProfile {
    pub participant_id: String,
    pub age: f64,
    pub sex: String,
    pub traits: Vec<TraitScore>,
    pub trait_order_id: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("trait order is empty")]
    EmptyOrder,
    #[error("trait order has {0} entries, more than the maximum {MAX_TRAITS}")]
    TooManyTraits(usize),
    #[error("trait order lists {0:?} twice")]
    DuplicateInOrder(String),
    #[error("first five traits must be the Big Five, found {0:?}")]
    BigFiveFirst(Vec<String>),
    #[error("participant {participant}: missing required traits {missing:?}")]
    MissingTraits {
        participant: String,
        missing: Vec<String>,
    },
    #[error("participant {participant}: trait {trait_id:?} scored twice")]
    DuplicateScore {
        participant: String,
        trait_id: String,
    },
    #[error("cannot select {requested} traits: must be between 1 and {available}")]
    Selection { requested: usize, available: usize },
    #[error("trait order file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// The configured canonical priority ordering of traits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitOrder {
    pub id: String,
    pub traits: Vec<String>,
    /// Traits that may be absent from a participant's scores.
    #[serde(default)]
    pub optional: BTreeSet<String>,
}

impl TraitOrder {
    pub fn new(id: impl Into<String>, traits: Vec<String>) -> Result<Self, ProfileError> {
        let order = Self {
            id: id.into(),
            traits,
            optional: BTreeSet::new(),
        };
        order.validate()?;
        Ok(order)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.traits.is_empty() {
            return Err(ProfileError::EmptyOrder);
        }
        if self.traits.len() > MAX_TRAITS {
            return Err(ProfileError::TooManyTraits(self.traits.len()));
        }
        let mut seen = BTreeSet::new();
        for t in &self.traits {
            if !seen.insert(t.as_str()) {
                return Err(ProfileError::DuplicateInOrder(t.clone()));
            }
        }
        if self.traits.len() >= 5 {
            let head: BTreeSet<&str> = self.traits[..5].iter().map(String::as_str).collect();
            let big5: BTreeSet<&str> = BIG_FIVE.into_iter().collect();
            if head != big5 {
                return Err(ProfileError::BigFiveFirst(self.traits[..5].to_vec()));
            }
        }
        Ok(())
    }

    /// Prefix of this order.
    pub fn truncated(&self, n: usize) -> Result<TraitOrder, ProfileError> {
        if n == 0 || n > self.traits.len() {
            return Err(ProfileError::Selection {
                requested: n,
                available: self.traits.len(),
            });
        }
        Ok(TraitOrder {
            id: self.id.clone(),
            traits: self.traits[..n].to_vec(),
            optional: self.optional.clone(),
        })
    }

    /// Parse the line-oriented order file: one trait per line, `#` comments,
    /// an `# order_id: <id>` header and a trailing `?` for optional traits.
    pub fn parse(text: &str) -> Result<Self, ProfileError> {
        let mut id = None;
        let mut traits = Vec::new();
        let mut optional = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("order_id:") {
                    id = Some(v.trim().to_string());
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (name, opt) = match line.strip_suffix('?') {
                Some(n) => (n.trim_end(), true),
                None => (line, false),
            };
            if name.is_empty() {
                return Err(ProfileError::Parse {
                    line: i + 1,
                    message: "empty trait name".into(),
                });
            }
            if opt {
                optional.insert(name.to_string());
            }
            traits.push(name.to_string());
        }
        let id = id.ok_or(ProfileError::Parse {
            line: 1,
            message: "missing '# order_id:' header".into(),
        })?;
        let order = Self {
            id,
            traits,
            optional,
        };
        order.validate()?;
        Ok(order)
    }

    pub fn render(&self) -> String {
        let mut out = format!("# order_id: {}\n", self.id);
        for t in &self.traits {
            out.push_str(t);
            if self.optional.contains(t) {
                out.push_str(" ?");
            }
            out.push('\n');
        }
        out
    }

    /// The order shipped with the crate: Big Five, the documented table
    /// traits, then the remaining battery traits.
    pub fn canonical() -> Self {
        Self::parse(CANONICAL_ORDER).expect("shipped trait order is valid")
    }
}

pub const CANONICAL_ORDER: &str = include_str!("../../config/trait_order.txt");

/// Assemble a profile whose traits follow `order`.
pub fn build_profile(
    participant_id: &str,
    demographics: &Demographics,
    scores: &[TraitScore],
    order: &TraitOrder,
) -> Result<TraitProfile, ProfileError> {
    order.validate()?;
    let mut by_id: BTreeMap<&str, &TraitScore> = BTreeMap::new();
    for s in scores {
        if by_id.insert(s.trait_id.as_str(), s).is_some() {
            return Err(ProfileError::DuplicateScore {
                participant: participant_id.to_string(),
                trait_id: s.trait_id.clone(),
            });
        }
    }
    let missing: Vec<String> = order
        .traits
        .iter()
        .filter(|t| !by_id.contains_key(t.as_str()) && !order.optional.contains(*t))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(ProfileError::MissingTraits {
            participant: participant_id.to_string(),
            missing,
        });
    }
    let traits = order
        .traits
        .iter()
        .filter_map(|t| by_id.get(t.as_str()).map(|s| (*s).clone()))
        .collect();
    Ok(TraitProfile {
        participant_id: participant_id.to_string(),
        age: demographics.age,
        sex: demographics.sex.clone(),
        traits,
        trait_order_id: order.id.clone(),
    })
}

/// Keep the first `n` traits of the canonical ordering.
pub fn select_traits(profile: &TraitProfile, n: usize) -> Result<TraitProfile, ProfileError> {
    if n == 0 || n > profile.traits.len() {
        return Err(ProfileError::Selection {
            requested: n,
            available: profile.traits.len(),
        });
    }
    Ok(TraitProfile {
        traits: profile.traits[..n].to_vec(),
        ..profile.clone()
    })
}

impl TraitProfile {
    pub fn k(&self) -> usize {
        self.traits.len()
    }

    pub fn get(&self, trait_id: &str) -> Option<&TraitScore> {
        self.traits.iter().find(|t| t.trait_id == trait_id)
    }
}

pub const PROFILES_KIND: &str = "trait_profiles";

pub fn save_profiles(
    path: &Path,
    profiles: &[TraitProfile],
    config_hash: Option<&str>,
) -> Result<usize, JsonlError> {
    let header = match config_hash {
        Some(h) => Header::with_hash(PROFILES_KIND, h),
        None => Header::new(PROFILES_KIND),
    };
    jsonl::write_jsonl(path, Some(&header), profiles)
}

pub fn load_profiles(path: &Path) -> Result<Vec<TraitProfile>, JsonlError> {
    jsonl::read_jsonl(path, Some(PROFILES_KIND))
}
