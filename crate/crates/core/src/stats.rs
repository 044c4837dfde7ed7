//! Permutation tests and bootstrap intervals for the bias measures.
//!
//! Replicate `i` always draws from `SimRng::new(seed, i)`, so results do not
//! depend on the number of threads or the order replicates finish in.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BiasError, Result};
use crate::measures::prepared::{Prepared, Sample};
use crate::measures::{evaluate_on, AuditInput, Measure};
use crate::rng::SimRng;

/// Fewest replicates either procedure accepts.
pub const MIN_REPLICATES: usize = 100;
/// Smallest population the bootstrap resamples.
pub const MIN_BOOTSTRAP_POPULATION: usize = 5;

/// Null replicates within this of the observed magnitude count as ties.
const TIE_TOLERANCE: f64 = 1e-12;

const SUMMARY_QUANTILES: [(&str, f64); 5] = [
    ("q05", 0.05),
    ("q25", 0.25),
    ("q50", 0.5),
    ("q75", 0.75),
    ("q95", 0.95),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub mean: f64,
    pub sd: f64,
    pub quantiles: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub measure: Measure,
    pub observed: f64,
    pub null_summary: NullSummary,
    /// `(1 + #{null >= observed}) / (1 + n_permutations)`.
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(values: &[f64]) -> NullSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    NullSummary {
        mean,
        sd: var.sqrt(),
        quantiles: SUMMARY_QUANTILES
            .iter()
            .map(|(name, q)| (name.to_string(), quantile_sorted(&sorted, *q)))
            .collect(),
    }
}

fn check_replicates(n: usize, what: &str) -> Result<()> {
    if n < MIN_REPLICATES {
        return Err(BiasError::Parameter(format!(
            "{what} must be at least {MIN_REPLICATES}, got {n}"
        )));
    }
    Ok(())
}

/// One-sided label-permutation test of a class-level measure.
pub fn permutation_test(
    input: &AuditInput,
    measure: Measure,
    n_permutations: usize,
    seed: u64,
) -> Result<SignificanceResult> {
    let prep = Prepared::new(input)?;
    let mut out = permutation_tests_prepared(&prep, &[measure], n_permutations, seed)?;
    Ok(out.remove(0))
}

/// Permutation tests of several measures on shared relabelings. Each result
/// equals what [`permutation_test`] returns for that measure alone.
pub fn permutation_tests(
    input: &AuditInput,
    measures: &[Measure],
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<SignificanceResult>> {
    let prep = Prepared::new(input)?;
    permutation_tests_prepared(&prep, measures, n_permutations, seed)
}

fn evaluate_all(prep: &Prepared<'_>, sample: &Sample, measures: &[Measure]) -> Result<Vec<f64>> {
    measures
        .iter()
        .map(|&m| evaluate_on(prep, sample, m, false).map(|v| v.magnitude))
        .collect()
}

pub(crate) fn permutation_tests_prepared(
    prep: &Prepared<'_>,
    measures: &[Measure],
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<SignificanceResult>> {
    if let Some(m) = measures.iter().find(|m| !m.is_group()) {
        return Err(BiasError::Parameter(format!(
            "{} does not compare the two classes; permutation testing needs a class-level measure",
            m.name()
        )));
    }
    check_replicates(n_permutations, "n_permutations")?;
    let full = prep.full_sample();
    let observed = evaluate_all(prep, &full, measures)?;
    let null = (0..n_permutations)
        .into_par_iter()
        .map(|i| {
            let mut rng = SimRng::new(seed, i as u64);
            let mut in_p = full.in_p.clone();
            rng.shuffle(&mut in_p);
            evaluate_all(prep, &prep.sample(full.members.clone(), in_p), measures)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(measures
        .iter()
        .enumerate()
        .map(|(j, &measure)| {
            let values: Vec<f64> = null.iter().map(|row| row[j]).collect();
            let exceed = values
                .iter()
                .filter(|&&x| x >= observed[j] - TIE_TOLERANCE)
                .count();
            SignificanceResult {
                measure,
                observed: observed[j],
                null_summary: summarize(&values),
                p_value: (1 + exceed) as f64 / (1 + n_permutations) as f64,
                n_permutations,
                seed,
            }
        })
        .collect())
}

/// Percentile bootstrap interval over users.
///
/// Users are resampled with replacement within their class, so every
/// resample keeps both classes at their observed sizes.
pub fn bootstrap_ci(
    input: &AuditInput,
    measure: Measure,
    n_resamples: usize,
    confidence_level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let prep = Prepared::new(input)?;
    let mut out = bootstrap_cis_prepared(&prep, &[measure], n_resamples, confidence_level, seed)?;
    Ok(out.remove(0))
}

/// Bootstrap intervals of several measures on shared resamples.
pub(crate) fn bootstrap_cis_prepared(
    prep: &Prepared<'_>,
    measures: &[Measure],
    n_resamples: usize,
    confidence_level: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    check_replicates(n_resamples, "n_resamples")?;
    if !(confidence_level > 0.0 && confidence_level < 1.0) {
        return Err(BiasError::Parameter(format!(
            "confidence_level must lie in (0, 1), got {confidence_level}"
        )));
    }
    let n = prep.n_users();
    if n < MIN_BOOTSTRAP_POPULATION {
        return Err(BiasError::SmallSample(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_POPULATION} users, got {n}"
        )));
    }
    let full = prep.full_sample();
    let strata: [Vec<usize>; 2] = [
        full.members
            .iter()
            .copied()
            .filter(|&u| full.in_p[u])
            .collect(),
        full.members
            .iter()
            .copied()
            .filter(|&u| !full.in_p[u])
            .collect(),
    ];
    let stats = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = SimRng::new(seed, i as u64);
            let mut members = Vec::with_capacity(n);
            let mut in_p = Vec::with_capacity(n);
            for (stratum, label) in strata.iter().zip([true, false]) {
                for _ in 0..stratum.len() {
                    members.push(stratum[rng.below(stratum.len() as u64) as usize]);
                    in_p.push(label);
                }
            }
            evaluate_all(prep, &prep.sample(members, in_p), measures)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let alpha = 1.0 - confidence_level;
    Ok((0..measures.len())
        .map(|j| {
            let mut values: Vec<f64> = stats.iter().map(|row| row[j]).collect();
            values.sort_by(f64::total_cmp);
            (
                quantile_sorted(&values, alpha / 2.0),
                quantile_sorted(&values, 1.0 - alpha / 2.0),
            )
        })
        .collect())
}
