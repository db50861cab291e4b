//! Psychometric scoring: instruments, standardization, binning and profiles.

mod battery;
mod binning;
mod instrument;
mod profile;

pub use battery::{
    mean_sd, Battery, BatteryError, NormSource, NormTable, ParticipantInfo, ScoringSnapshot,
    SHIPPED_BATTERY,
};
pub use binning::{
    nearest_rank, BinningError, BinningKind, BinningRule, BinningSpec, Cutoff, InputScale,
    RangeBand, SIGMA_LABELS,
};
pub use instrument::{
    reverse_code, score_instrument, standardize, Aggregation, InstrumentSpec, ItemResponses, Norm,
    ScoreError, SpecError, TraitDef,
};
pub use profile::{
    build_profile, load_profiles, save_profiles, select_traits, Demographics, ProfileError,
    TraitOrder, TraitProfile, TraitScore, BIG_FIVE, CANONICAL_ORDER, MAX_TRAITS, PROFILES_KIND,
};

/// Bin a value under a rule.
pub fn bin_trait(value: f64, rule: &BinningRule) -> &str {
    rule.bin(value)
}
