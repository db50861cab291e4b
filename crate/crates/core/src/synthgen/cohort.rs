use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::SynthError;
use crate::psychometrics::{BinningRule, TraitOrder, TraitProfile, TraitScore};
use crate::seeding;

/// Ages are drawn uniformly from this inclusive range, in whole years.
pub const AGE_RANGE: (u32, u32) = (18, 70);
/// Sex is drawn uniformly from these values.
pub const SEXES: [&str; 2] = ["female", "male"];

pub fn participant_id(i: usize) -> String {
    format!("syn{:05}", i + 1)
}

/// Lower-triangular `L` with `L L^T = a`. Fails unless `a` is symmetric
/// positive definite.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SynthError> {
    let n = a.len();
    if a.iter().any(|row| row.len() != n) {
        return Err(SynthError::Correlation("matrix is not square".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > 1e-12 {
                return Err(SynthError::Correlation(format!(
                    "not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return Err(SynthError::Correlation(format!(
                        "not positive definite (pivot {i})"
                    )));
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// `n` profiles over the first `k` canonical traits, z-values i.i.d. N(0, 1).
pub fn gen_cohort(n: usize, k: usize, seed: u64) -> Result<Vec<TraitProfile>, SynthError> {
    gen_cohort_with(n, k, seed, None)
}

/// As [`gen_cohort`], optionally correlating the z-values through `corr`
/// (a K x K correlation matrix with unit diagonal).
pub fn gen_cohort_with(
    n: usize,
    k: usize,
    seed: u64,
    corr: Option<&[Vec<f64>]>,
) -> Result<Vec<TraitProfile>, SynthError> {
    let order = TraitOrder::canonical();
    if n == 0 || k == 0 || k > order.traits.len() {
        return Err(SynthError::CohortShape {
            n,
            k,
            max: order.traits.len(),
        });
    }
    let chol = match corr {
        None => None,
        Some(c) => {
            if c.len() != k {
                return Err(SynthError::Correlation(format!(
                    "expected {k} x {k}, got {} rows",
                    c.len()
                )));
            }
            if let Some(i) = (0..k).find(|&i| (c[i][i] - 1.0).abs() > 1e-12) {
                return Err(SynthError::Correlation(format!(
                    "diagonal entry {i} is not 1"
                )));
            }
            Some(cholesky(c)?)
        }
    };
    let rule = BinningRule::sigma_bands5();
    let names = &order.traits[..k];
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeding::rng_indexed(seed, "cohort", i as u64);
            let age = rng.gen_range(AGE_RANGE.0..=AGE_RANGE.1) as f64;
            let sex = SEXES[rng.gen_range(0..SEXES.len())];
            let e: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let z: Vec<f64> = match &chol {
                None => e,
                Some(l) => (0..k)
                    .map(|r| (0..=r).map(|c| l[r][c] * e[c]).sum())
                    .collect(),
            };
            TraitProfile {
                participant_id: participant_id(i),
                age,
                sex: sex.to_string(),
                traits: names
                    .iter()
                    .zip(&z)
                    .map(|(name, &z)| TraitScore {
                        trait_id: name.clone(),
                        raw: z,
                        z: Some(z),
                        bin: rule.bin(z).to_string(),
                    })
                    .collect(),
                trait_order_id: order.id.clone(),
            }
        })
        .collect())
}

/// The first `k` z-values of a profile; missing z counts as 0.
pub fn z_vector(profile: &TraitProfile, k: usize) -> Result<Vec<f64>, SynthError> {
    if profile.traits.len() < k {
        return Err(SynthError::ProfileTraits {
            participant: profile.participant_id.clone(),
            available: profile.traits.len(),
            needed: k,
        });
    }
    Ok(profile.traits[..k]
        .iter()
        .map(|t| t.z.unwrap_or(0.0))
        .collect())
}
