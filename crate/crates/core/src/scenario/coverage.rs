use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Bank, ResponseRecord};

/// Which participants answered which scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    pub participants: Vec<String>,
    pub scenarios: Vec<String>,
    /// observed[i][j]: participant i answered scenario j.
    pub observed: Vec<Vec<bool>>,
    pub coverage_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoverageError {
    #[error("record {index} references unknown participant {id:?}")]
    UnknownParticipant { index: usize, id: String },
    #[error("record {index} references unknown scenario {id:?}")]
    UnknownScenario { index: usize, id: String },
}

pub fn coverage(
    records: &[ResponseRecord],
    participants: &[String],
    bank: &Bank,
) -> Result<CoverageMatrix, CoverageError> {
    let scenarios: Vec<String> = bank.ids().map(String::from).collect();
    let p_index: BTreeMap<&str, usize> = participants
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i))
        .collect();
    let s_index: BTreeMap<&str, usize> = scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut observed = vec![vec![false; scenarios.len()]; participants.len()];
    for (index, r) in records.iter().enumerate() {
        let i = *p_index.get(r.participant_id.as_str()).ok_or_else(|| {
            CoverageError::UnknownParticipant {
                index,
                id: r.participant_id.clone(),
            }
        })?;
        let j =
            *s_index
                .get(r.scenario_id.as_str())
                .ok_or_else(|| CoverageError::UnknownScenario {
                    index,
                    id: r.scenario_id.clone(),
                })?;
        observed[i][j] = true;
    }
    let cells = participants.len() * scenarios.len();
    let count = observed.iter().flatten().filter(|&&o| o).count();
    let coverage_ratio = if cells == 0 {
        0.0
    } else {
        count as f64 / cells as f64
    };
    Ok(CoverageMatrix {
        participants: participants.to_vec(),
        scenarios,
        observed,
        coverage_ratio,
    })
}

impl CoverageMatrix {
    pub fn observed_count(&self) -> usize {
        self.observed.iter().flatten().filter(|&&o| o).count()
    }
}
