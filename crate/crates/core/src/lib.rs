//! Benchmark pipeline for individual-level behavioral prediction.
//!
//! The crate scores psychometric instruments into binned trait profiles,
//! serializes profile + scenario prompts, queries predictor backends, parses
//! their structured answers and evaluates them with class-imbalance-aware
//! metrics and participant-level bootstrap intervals.
//!
//! Module map:
//! - [`psychometrics`]: instrument scoring, standardization, binning, profiles
//! - [`scenario`]: scenario bank, response records, held-out split, coverage
//! - [`promptgen`]: deterministic prompt serialization and SFT export
//! - [`outparse`]: strict and lenient parsing of predictor output
//! - [`predictors`]: remote chat backend, baselines, trait-conditioned model
//! - [`evalkit`]: confusion matrices, metrics, bootstrap, sweeps, reports
//! - [`synthgen`]: synthetic cohorts, choice models and responses

pub mod evalkit;
pub mod jsonl;
pub mod outparse;
pub mod predictors;
pub mod promptgen;
pub mod psychometrics;
pub mod scenario;
pub mod seeding;
pub mod synthgen;

/// Current schema version written into every file this crate emits.
pub const SCHEMA_VERSION: u32 = 1;
