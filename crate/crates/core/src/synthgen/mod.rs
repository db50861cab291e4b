//! Synthetic cohorts, ground-truth choice models and sampled responses, so
//! the whole pipeline runs without the proprietary data.
//!
//! Every output is a pure function of its seed and arguments. Per-participant
//! work draws from `rng_indexed(seed, domain, participant_index)`, so results
//! do not depend on thread scheduling.

mod bank;
mod choice;
mod cohort;
mod responses;

pub use bank::{example_bank, gen_bank, EXAMPLE_SCENARIOS};
pub use choice::{
    estimate_bayes_accuracy, gen_choice_model, mutual_information_prefix, ChoiceModel, ChoiceSpec,
    QuestionUtility,
};
pub use cohort::{
    cholesky, gen_cohort, gen_cohort_with, participant_id, z_vector, AGE_RANGE, SEXES,
};
pub use responses::{gen_responses, GroundTruth, CONTEXT_TEMPLATES, GROUND_TRUTH_KIND};

use crate::scenario::BankError;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("cohort needs n >= 1 and 1 <= K <= {max}, got n = {n}, K = {k}")]
    CohortShape { n: usize, k: usize, max: usize },
    #[error("correlation matrix: {0}")]
    Correlation(String),
    #[error("informative trait count {m} exceeds K = {k}")]
    TooManyInformative { m: usize, k: usize },
    #[error("{requested} interaction pairs requested but only {available} exist among {m} traits")]
    TooManyPairs {
        requested: usize,
        available: usize,
        m: usize,
    },
    #[error("temperature must be finite and >= 0, got {0}")]
    Temperature(f64),
    #[error("target Bayes accuracy {target} unreachable: {reason}")]
    Target { target: f64, reason: String },
    #[error("coverage rate must be in (0, 1], got {0}")]
    Coverage(f64),
    #[error("participant {0} drew an empty scenario subset twice")]
    EmptySubset(String),
    #[error("profile {participant} has {available} traits, model needs {needed}")]
    ProfileTraits {
        participant: String,
        available: usize,
        needed: usize,
    },
    #[error("bank needs at least {min} scenarios, got {n}")]
    BankSize { n: usize, min: usize },
    #[error("no utility for {0}")]
    MissingQuestion(String),
    #[error(transparent)]
    Bank(#[from] BankError),
}
