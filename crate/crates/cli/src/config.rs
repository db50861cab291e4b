use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use traitbench::evalkit::{BackendFactory, DEFAULT_COUNTS, DEFAULT_RESAMPLES};
use traitbench::predictors::BackendConfig;
use traitbench::psychometrics::MAX_TRAITS;
use traitbench::seeding::short_hash;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub split: SplitSection,
    pub bootstrap: BootstrapSection,
    #[serde(default = "default_counts")]
    pub counts: Vec<usize>,
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
    #[serde(default)]
    pub parse_mode: ParseMode,
    #[serde(default)]
    pub per_question: bool,
    #[serde(default)]
    pub prompt: PromptSection,
    #[serde(default)]
    pub sft: SftSection,
    #[serde(default)]
    pub synth: Option<SynthSection>,
}

fn default_counts() -> Vec<usize> {
    DEFAULT_COUNTS.to_vec()
}

/// Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub bank: PathBuf,
    pub profiles: PathBuf,
    pub records: PathBuf,
    pub output_dir: PathBuf,
    /// Demographics JSONL, input to `score`.
    pub participants: Option<PathBuf>,
    /// Item responses JSONL, input to `score`.
    pub items: Option<PathBuf>,
    pub battery: Option<PathBuf>,
    pub norms: Option<PathBuf>,
    pub trait_order: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub ratio: f64,
    pub seed: u64,
    #[serde(default = "yes")]
    pub stratified: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "default_resamples")]
    pub n_resamples: usize,
    pub seed: u64,
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSection {
    pub wrap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftSection {
    #[serde(default = "default_weight")]
    pub answer_weight: f64,
}

fn default_weight() -> f64 {
    5.0
}

impl Default for SftSection {
    fn default() -> Self {
        Self {
            answer_weight: default_weight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub participants: usize,
    #[serde(default = "max_traits")]
    pub traits: usize,
    #[serde(default = "default_scenarios")]
    pub scenarios: usize,
    pub informative: usize,
    #[serde(default)]
    pub interactions: usize,
    #[serde(default = "one")]
    pub tau: f64,
    pub target_bayes: Option<f64>,
    #[serde(default = "default_specificity")]
    pub specificity: f64,
    #[serde(default = "one")]
    pub coverage: f64,
    pub seed: u64,
}

fn max_traits() -> usize {
    MAX_TRAITS
}

fn default_scenarios() -> usize {
    55
}

fn one() -> f64 {
    1.0
}

fn default_specificity() -> f64 {
    0.3
}

/// A loaded config plus where it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base: PathBuf,
    pub hash: String,
}

impl Loaded {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            hash: config.hash(),
            config,
            base,
        })
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Input path that must exist before a run starts.
    pub fn input(&self, field: &str, p: &Path) -> Result<PathBuf, CliError> {
        let full = self.path(p);
        if !full.exists() {
            return Err(CliError::Config(format!(
                "{field}: {} does not exist",
                full.display()
            )));
        }
        Ok(full)
    }

    pub fn optional_input(
        &self,
        field: &str,
        p: Option<&PathBuf>,
    ) -> Result<Option<PathBuf>, CliError> {
        p.map(|p| self.input(field, p)).transpose()
    }
}

impl ExperimentConfig {
    /// Hash of the parsed config; comments and layout do not affect it.
    pub fn hash(&self) -> String {
        short_hash(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: &str| Err(CliError::Config(format!("{field}: {msg}")));
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return bad("split.ratio", "must be in (0, 1)");
        }
        if self.bootstrap.n_resamples == 0 {
            return bad("bootstrap.n_resamples", "must be at least 1");
        }
        if self.counts.is_empty() {
            return bad("counts", "must not be empty");
        }
        if self.counts.windows(2).any(|w| w[0] >= w[1]) {
            return bad("counts", "must be strictly ascending");
        }
        if self.counts[self.counts.len() - 1] > MAX_TRAITS {
            return bad("counts", &format!("must not exceed {MAX_TRAITS}"));
        }
        if !(self.sft.answer_weight.is_finite() && self.sft.answer_weight >= 1.0) {
            return bad("sft.answer_weight", "must be finite and >= 1");
        }
        if self.prompt.wrap == Some(0) {
            return bad("prompt.wrap", "must be positive");
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, b) in self.backends.iter().enumerate() {
            if let BackendConfig::RemoteChat(r) = b {
                r.validate()
                    .map_err(|e| CliError::Config(format!("backends[{i}]: {e}")))?;
            }
            if !names.insert(b.name()) {
                return bad(
                    &format!("backends[{i}]"),
                    &format!("duplicate backend name {:?}", b.name()),
                );
            }
        }
        if let Some(s) = &self.synth {
            if s.participants == 0 {
                return bad("synth.participants", "must be at least 1");
            }
            if s.traits == 0 || s.traits > MAX_TRAITS {
                return bad("synth.traits", &format!("must be in 1..={MAX_TRAITS}"));
            }
            if s.informative > s.traits {
                return bad("synth.informative", "must not exceed synth.traits");
            }
            if self.counts[self.counts.len() - 1] > s.traits {
                return bad("counts", "must not exceed synth.traits");
            }
            if !(s.coverage > 0.0 && s.coverage <= 1.0) {
                return bad("synth.coverage", "must be in (0, 1]");
            }
        }
        Ok(())
    }

    /// Backends with the config-wide parse mode applied.
    pub fn resolved_backends(&self) -> Vec<BackendConfig> {
        self.backends
            .iter()
            .map(|b| match b {
                BackendConfig::RemoteChat(r) if self.parse_mode == ParseMode::Lenient => {
                    BackendConfig::RemoteChat(traitbench::predictors::RemoteConfig {
                        lenient: true,
                        ..r.clone()
                    })
                }
                other => other.clone(),
            })
            .collect()
    }
}
