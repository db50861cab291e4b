//! Ordinal binning of trait scores.
//!
//! Every rule resolves to an ordered label list plus strictly increasing
//! cutoffs, one fewer than labels. A value lands in the band whose index is
//! the number of cutoffs it passes, so binning is total and monotone by
//! construction. Bands are closed below and open above unless a cutoff is
//! marked `lower_inclusive`, which keeps the boundary value in the lower band
//! (the `<= 52` / `> 5` style ranges of published scoring keys).

use serde::{Deserialize, Serialize};

/// Labels of the five sigma bands, lowest first.
pub const SIGMA_LABELS: [&str; 5] = ["Very low", "Low", "Normal", "High", "Very high"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinningKind {
    SigmaBands5,
    RawRanges,
    Tertile,
    Quartile,
    MeanScoreRanges,
    TScoreCut,
}

/// Which scale a rule is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputScale {
    Z,
    Raw,
    /// T = 50 + 10 z
    TScore,
}

impl BinningKind {
    pub fn input_scale(self) -> InputScale {
        match self {
            BinningKind::SigmaBands5 => InputScale::Z,
            BinningKind::TScoreCut => InputScale::TScore,
            _ => InputScale::Raw,
        }
    }

    pub fn needs_norm(self) -> bool {
        self.input_scale() != InputScale::Raw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub at: f64,
    /// When true a value equal to `at` stays in the lower band.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub lower_inclusive: bool,
}

impl Cutoff {
    pub fn closed_above(at: f64) -> Self {
        Self {
            at,
            lower_inclusive: false,
        }
    }

    pub fn closed_below(at: f64) -> Self {
        Self {
            at,
            lower_inclusive: true,
        }
    }

    fn passed_by(&self, value: f64) -> bool {
        value > self.at || (value == self.at && !self.lower_inclusive)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BinningError {
    #[error("binning rule needs {expected} labels for {cutoffs} cutoffs, got {got}")]
    LabelCount {
        expected: usize,
        cutoffs: usize,
        got: usize,
    },
    #[error("duplicate bin label {0:?}")]
    DuplicateLabel(String),
    #[error("cutoffs must be finite and strictly increasing (at index {0})")]
    CutoffOrder(usize),
    #[error("{kind:?} needs {expected} labels, got {got}")]
    VariantLabels {
        kind: BinningKind,
        expected: usize,
        got: usize,
    },
    #[error("{0:?} cutoffs not fitted; fit them from the training cohort first")]
    Unfitted(BinningKind),
    #[error("cannot fit {0:?} cutoffs from an empty cohort")]
    EmptyCohort(BinningKind),
    #[error("range band {0} has no upper bound but is not the last band")]
    OpenBandNotLast(usize),
}

/// A resolved, total binning rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningRule {
    pub kind: BinningKind,
    pub labels: Vec<String>,
    pub cutoffs: Vec<Cutoff>,
}

impl BinningRule {
    pub fn new(
        kind: BinningKind,
        labels: Vec<String>,
        cutoffs: Vec<Cutoff>,
    ) -> Result<Self, BinningError> {
        let rule = Self {
            kind,
            labels,
            cutoffs,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<(), BinningError> {
        if self.labels.len() != self.cutoffs.len() + 1 {
            return Err(BinningError::LabelCount {
                expected: self.cutoffs.len() + 1,
                cutoffs: self.cutoffs.len(),
                got: self.labels.len(),
            });
        }
        for (i, label) in self.labels.iter().enumerate() {
            if self.labels[..i].contains(label) {
                return Err(BinningError::DuplicateLabel(label.clone()));
            }
        }
        for (i, c) in self.cutoffs.iter().enumerate() {
            if !c.at.is_finite() || (i > 0 && c.at <= self.cutoffs[i - 1].at) {
                return Err(BinningError::CutoffOrder(i));
            }
        }
        Ok(())
    }

    /// z-score bands at -2, -1, 1, 2 sigma.
    pub fn sigma_bands5() -> Self {
        Self {
            kind: BinningKind::SigmaBands5,
            labels: SIGMA_LABELS.iter().map(|s| s.to_string()).collect(),
            cutoffs: [-2.0, -1.0, 1.0, 2.0]
                .into_iter()
                .map(Cutoff::closed_above)
                .collect(),
        }
    }

    pub fn t_score_cut(cut: f64, labels: [&str; 2]) -> Self {
        Self {
            kind: BinningKind::TScoreCut,
            labels: labels.iter().map(|s| s.to_string()).collect(),
            cutoffs: vec![Cutoff::closed_above(cut)],
        }
    }

    /// Index of the band containing `value`.
    pub fn band_index(&self, value: f64) -> usize {
        self.cutoffs
            .iter()
            .take_while(|c| c.passed_by(value))
            .count()
    }

    pub fn bin(&self, value: f64) -> &str {
        &self.labels[self.band_index(value)]
    }

    pub fn input_scale(&self) -> InputScale {
        self.kind.input_scale()
    }
}

/// One explicit band of a range rule, as written in a scoring key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeBand {
    pub label: String,
    /// Inclusive upper bound (`12--30` style).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// Exclusive upper bound (`< 33` style).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub below: Option<f64>,
}

/// Configuration form of a binning rule. Quantile rules may leave their
/// cutoffs unset, to be fitted from a training cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum BinningSpec {
    SigmaBands5,
    RawRanges {
        bands: Vec<RangeBand>,
    },
    MeanScoreRanges {
        bands: Vec<RangeBand>,
    },
    Tertile {
        labels: Vec<String>,
        #[serde(default)]
        cutoffs: Option<[f64; 2]>,
    },
    Quartile {
        labels: Vec<String>,
        #[serde(default)]
        cutoffs: Option<[f64; 2]>,
    },
    TScoreCut {
        cut: f64,
        labels: Vec<String>,
    },
}

fn ranges_to_rule(kind: BinningKind, bands: &[RangeBand]) -> Result<BinningRule, BinningError> {
    let mut labels = Vec::with_capacity(bands.len());
    let mut cutoffs = Vec::new();
    for (i, band) in bands.iter().enumerate() {
        labels.push(band.label.clone());
        let last = i + 1 == bands.len();
        match (band.max, band.below) {
            (Some(max), _) if !last => cutoffs.push(Cutoff::closed_below(max)),
            (None, Some(below)) if !last => cutoffs.push(Cutoff::closed_above(below)),
            (None, None) if !last => return Err(BinningError::OpenBandNotLast(i)),
            // the last band is half-infinite regardless of any stated bound
            _ => {}
        }
    }
    BinningRule::new(kind, labels, cutoffs)
}

impl BinningSpec {
    pub fn kind(&self) -> BinningKind {
        match self {
            BinningSpec::SigmaBands5 => BinningKind::SigmaBands5,
            BinningSpec::RawRanges { .. } => BinningKind::RawRanges,
            BinningSpec::MeanScoreRanges { .. } => BinningKind::MeanScoreRanges,
            BinningSpec::Tertile { .. } => BinningKind::Tertile,
            BinningSpec::Quartile { .. } => BinningKind::Quartile,
            BinningSpec::TScoreCut { .. } => BinningKind::TScoreCut,
        }
    }

    pub fn is_fitted(&self) -> bool {
        !matches!(
            self,
            BinningSpec::Tertile { cutoffs: None, .. }
                | BinningSpec::Quartile { cutoffs: None, .. }
        )
    }

    /// Check everything that can be checked before fitting.
    pub fn validate(&self) -> Result<(), BinningError> {
        match self {
            BinningSpec::Tertile {
                labels,
                cutoffs: None,
            }
            | BinningSpec::Quartile {
                labels,
                cutoffs: None,
            } => {
                if labels.len() != 3 {
                    return Err(BinningError::VariantLabels {
                        kind: self.kind(),
                        expected: 3,
                        got: labels.len(),
                    });
                }
                let probe: Vec<Cutoff> = vec![Cutoff::closed_above(0.0), Cutoff::closed_above(1.0)];
                BinningRule::new(self.kind(), labels.clone(), probe).map(|_| ())
            }
            _ => self.resolve().map(|_| ()),
        }
    }

    pub fn resolve(&self) -> Result<BinningRule, BinningError> {
        match self {
            BinningSpec::SigmaBands5 => Ok(BinningRule::sigma_bands5()),
            BinningSpec::RawRanges { bands } => ranges_to_rule(BinningKind::RawRanges, bands),
            BinningSpec::MeanScoreRanges { bands } => {
                ranges_to_rule(BinningKind::MeanScoreRanges, bands)
            }
            BinningSpec::Tertile { labels, cutoffs }
            | BinningSpec::Quartile { labels, cutoffs } => {
                let [lo, hi] = cutoffs.ok_or(BinningError::Unfitted(self.kind()))?;
                if labels.len() != 3 {
                    return Err(BinningError::VariantLabels {
                        kind: self.kind(),
                        expected: 3,
                        got: labels.len(),
                    });
                }
                BinningRule::new(
                    self.kind(),
                    labels.clone(),
                    vec![Cutoff::closed_above(lo), Cutoff::closed_above(hi)],
                )
            }
            BinningSpec::TScoreCut { cut, labels } => {
                if labels.len() != 2 {
                    return Err(BinningError::VariantLabels {
                        kind: self.kind(),
                        expected: 2,
                        got: labels.len(),
                    });
                }
                BinningRule::new(
                    self.kind(),
                    labels.clone(),
                    vec![Cutoff::closed_above(*cut)],
                )
            }
        }
    }

    /// Fit quantile cutoffs from cohort raw scores; other variants are
    /// returned unchanged.
    pub fn fit(&self, cohort_raw: &[f64]) -> Result<BinningSpec, BinningError> {
        let probs = match self {
            BinningSpec::Tertile { .. } => [1.0 / 3.0, 2.0 / 3.0],
            BinningSpec::Quartile { .. } => [0.25, 0.75],
            _ => return Ok(self.clone()),
        };
        if cohort_raw.is_empty() {
            return Err(BinningError::EmptyCohort(self.kind()));
        }
        let mut sorted = cohort_raw.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let lo = nearest_rank(&sorted, probs[0]);
        let mut hi = nearest_rank(&sorted, probs[1]);
        // degenerate cohorts (ties at the cut) still need increasing cutoffs
        if hi <= lo {
            hi = next_up(lo);
        }
        let cutoffs = Some([lo, hi]);
        Ok(match self {
            BinningSpec::Tertile { labels, .. } => BinningSpec::Tertile {
                labels: labels.clone(),
                cutoffs,
            },
            BinningSpec::Quartile { labels, .. } => BinningSpec::Quartile {
                labels: labels.clone(),
                cutoffs,
            },
            _ => unreachable!(),
        })
    }
}

/// Nearest-rank quantile on sorted data.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

fn next_up(x: f64) -> f64 {
    // smallest representable step above x, enough to keep cutoffs strictly increasing
    let bits = x.to_bits();
    if x == 0.0 {
        f64::from_bits(1)
    } else if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(label: &str, max: Option<f64>, below: Option<f64>) -> RangeBand {
        RangeBand {
            label: label.into(),
            max,
            below,
        }
    }

    fn bis11() -> BinningRule {
        BinningSpec::RawRanges {
            bands: vec![
                band("Low", Some(52.0), None),
                band("Average", Some(71.0), None),
                band("High", None, None),
            ],
        }
        .resolve()
        .unwrap()
    }

    #[test]
    fn sigma_bands_match_profile_lines() {
        let rule = BinningRule::sigma_bands5();
        assert_eq!(rule.bin(0.24), "Normal");
        assert_eq!(rule.bin(-1.56), "Low");
        assert_eq!(rule.bin(1.15), "High");
        assert_eq!(rule.bin(-2.5), "Very low");
        assert_eq!(rule.bin(2.5), "Very high");
    }

    #[test]
    fn sigma_boundaries_close_below() {
        let rule = BinningRule::sigma_bands5();
        assert_eq!(rule.bin(-2.0), "Low");
        assert_eq!(rule.bin(-1.0), "Normal");
        assert_eq!(rule.bin(1.0), "High");
        assert_eq!(rule.bin(2.0), "Very high");
    }

    #[test]
    fn explicit_ranges_keep_inclusive_upper() {
        let rule = bis11();
        assert_eq!(rule.bin(52.0), "Low");
        assert_eq!(rule.bin(53.0), "Average");
        assert_eq!(rule.bin(71.0), "Average");
        assert_eq!(rule.bin(72.0), "High");
    }

    #[test]
    fn mspss_gap_goes_to_lower_band() {
        let rule = BinningSpec::MeanScoreRanges {
            bands: vec![
                band("Low", None, Some(3.0)),
                band("Moderate", Some(5.0), None),
                band("High", None, None),
            ],
        }
        .resolve()
        .unwrap();
        assert_eq!(rule.bin(2.95), "Low");
        assert_eq!(rule.bin(3.0), "Moderate");
        assert_eq!(rule.bin(5.0), "Moderate");
        assert_eq!(rule.bin(5.01), "High");
    }

    #[test]
    fn t_score_cut_is_inclusive_at_cut() {
        let rule = BinningRule::t_score_cut(63.0, ["Normal", "High"]);
        assert_eq!(rule.bin(62.9), "Normal");
        assert_eq!(rule.bin(63.0), "High");
    }

    #[test]
    fn validation_rejects_bad_rules() {
        let dup = BinningRule::new(
            BinningKind::RawRanges,
            vec!["A".into(), "A".into()],
            vec![Cutoff::closed_above(1.0)],
        );
        assert_eq!(dup.unwrap_err(), BinningError::DuplicateLabel("A".into()));
        let order = BinningRule::new(
            BinningKind::RawRanges,
            vec!["A".into(), "B".into(), "C".into()],
            vec![Cutoff::closed_above(2.0), Cutoff::closed_above(2.0)],
        );
        assert_eq!(order.unwrap_err(), BinningError::CutoffOrder(1));
        let open = BinningSpec::RawRanges {
            bands: vec![band("A", None, None), band("B", None, None)],
        };
        assert_eq!(
            open.resolve().unwrap_err(),
            BinningError::OpenBandNotLast(0)
        );
    }

    #[test]
    fn tertile_fit_uses_nearest_rank() {
        let spec = BinningSpec::Tertile {
            labels: vec!["Low".into(), "Moderate".into(), "High".into()],
            cutoffs: None,
        };
        assert!(!spec.is_fitted());
        assert_eq!(
            spec.resolve().unwrap_err(),
            BinningError::Unfitted(BinningKind::Tertile)
        );
        let raw: Vec<f64> = (1..=9).map(f64::from).collect();
        let fitted = spec.fit(&raw).unwrap();
        assert_eq!(
            fitted,
            BinningSpec::Tertile {
                labels: vec!["Low".into(), "Moderate".into(), "High".into()],
                cutoffs: Some([3.0, 6.0])
            }
        );
        let rule = fitted.resolve().unwrap();
        assert_eq!(rule.bin(2.0), "Low");
        assert_eq!(rule.bin(3.0), "Moderate");
        assert_eq!(rule.bin(6.0), "High");
    }

    #[test]
    fn constant_cohort_still_fits() {
        let spec = BinningSpec::Quartile {
            labels: vec!["Low".into(), "Normal".into(), "High".into()],
            cutoffs: None,
        };
        let rule = spec.fit(&[4.0; 10]).unwrap().resolve().unwrap();
        assert_eq!(rule.bin(3.0), "Low");
        assert_eq!(rule.bin(4.0), "Normal");
    }

    #[test]
    fn spec_serializes_with_variant_tag() {
        let json = serde_json::to_string(&BinningSpec::SigmaBands5).unwrap();
        assert_eq!(json, r#"{"variant":"SigmaBands5"}"#);
        let back: BinningSpec =
            serde_json::from_str(r#"{"variant":"TScoreCut","cut":63,"labels":["Normal","High"]}"#)
                .unwrap();
        assert_eq!(back.resolve().unwrap().bin(70.0), "High");
    }
}
