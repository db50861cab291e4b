use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{QuestionFormat, Scenario};

/// One validation problem, with a JSON-path style location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankIssue {
    pub location: String,
    pub message: String,
}

impl fmt::Display for BankIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BankError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bank does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("bank has {} validation error(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<BankIssue>),
}

#[derive(Serialize, Deserialize)]
struct BankFile {
    schema_version: u32,
    scenarios: Vec<Scenario>,
}

/// A validated scenario bank. Read-only after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Bank {
    scenarios: Vec<Scenario>,
    index: BTreeMap<String, usize>,
}

impl Bank {
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self, BankError> {
        let issues = validate(&scenarios);
        if !issues.is_empty() {
            return Err(BankError::Invalid(issues));
        }
        let index = scenarios
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        Ok(Self { scenarios, index })
    }

    pub fn from_json(text: &str) -> Result<Self, BankError> {
        let file: BankFile = serde_json::from_str(text)?;
        if file.schema_version != crate::SCHEMA_VERSION {
            return Err(BankError::Invalid(vec![BankIssue {
                location: "schema_version".into(),
                message: format!("unsupported version {}", file.schema_version),
            }]));
        }
        Self::new(file.scenarios)
    }

    pub fn load(path: &Path) -> Result<Self, BankError> {
        let text = std::fs::read_to_string(path).map_err(|source| BankError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = BankFile {
            schema_version: crate::SCHEMA_VERSION,
            scenarios: self.scenarios.clone(),
        };
        serde_json::to_string_pretty(&file).expect("bank serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), BankError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|source| BankError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn get(&self, id: &str) -> Option<&Scenario> {
        self.index.get(id).map(|&i| &self.scenarios[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.scenarios.iter().map(|s| s.id.as_str())
    }
}

fn validate(scenarios: &[Scenario]) -> Vec<BankIssue> {
    let mut issues = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (si, s) in scenarios.iter().enumerate() {
        let loc = format!("scenarios[{si}]");
        if s.id.trim().is_empty() {
            issues.push(BankIssue {
                location: format!("{loc}.id"),
                message: "empty scenario id".into(),
            });
        }
        if let Some(first) = seen.insert(&s.id, si) {
            issues.push(BankIssue {
                location: format!("{loc}.id"),
                message: format!(
                    "duplicate scenario id {:?} (first at scenarios[{first}])",
                    s.id
                ),
            });
        }
        if s.prediction_questions.is_empty() {
            issues.push(BankIssue {
                location: format!("{loc}.prediction_questions"),
                message: format!("scenario {:?} has no prediction questions", s.id),
            });
        }
        let mut qids = BTreeSet::new();
        for (qi, q) in s.prediction_questions.iter().enumerate() {
            let qloc = format!("{loc}.prediction_questions[{qi}]");
            if !qids.insert(q.id.as_str()) {
                issues.push(BankIssue {
                    location: format!("{qloc}.id"),
                    message: format!("duplicate question id {:?} in scenario {:?}", q.id, s.id),
                });
            }
            let n = q.options.len();
            match q.format {
                QuestionFormat::MultipleChoice if n < 2 => issues.push(BankIssue {
                    location: format!("{qloc}.options"),
                    message: format!(
                        "multiple-choice question {}/{} has {n} option(s), needs at least 2",
                        s.id, q.id
                    ),
                }),
                QuestionFormat::Likert1To5 if n != 5 => issues.push(BankIssue {
                    location: format!("{qloc}.options"),
                    message: format!(
                        "likert question {}/{} must have options 1..5, has {n}",
                        s.id, q.id
                    ),
                }),
                QuestionFormat::OpenText if n != 0 => issues.push(BankIssue {
                    location: format!("{qloc}.options"),
                    message: format!("open-text question {}/{} must not have options", s.id, q.id),
                }),
                _ => {}
            }
            for (oi, o) in q.options.iter().enumerate() {
                if o.index as usize != oi + 1 {
                    issues.push(BankIssue {
                        location: format!("{qloc}.options[{oi}].index"),
                        message: format!(
                            "option indices must be contiguous from 1, found {} at position {}",
                            o.index,
                            oi + 1
                        ),
                    });
                }
            }
        }
    }
    issues
}
