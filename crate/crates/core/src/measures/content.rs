use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::prepared::{Prepared, PreparedQuery, Sample};
use super::{AuditInput, BiasVerdict, ClassSide, QueryAggregation, Subject};
use crate::error::{BiasError, Result};
use crate::ranking::attribute_distribution;
use crate::ranking::distribution::{dense_distance, max_abs_diff};

fn truth_for(prep: &Prepared<'_>, query_id: &str) -> Result<Vec<f64>> {
    let gt = prep.input.ground_truth_for(query_id).ok_or_else(|| {
        BiasError::Mode(format!(
            "no ground truth for query {query_id:?}; use a comparative audit instead"
        ))
    })?;
    let mut v = gt
        .to_distribution(prep.input.attribute())?
        .probabilities()
        .to_vec();
    v.push(0.0);
    Ok(v)
}

fn query<'p>(prep: &'p Prepared<'_>, query_id: &str) -> Result<&'p PreparedQuery> {
    prep.queries
        .iter()
        .find(|q| q.query_id == query_id)
        .ok_or_else(|| BiasError::Input(format!("query {query_id:?} is not in the battery")))
}

/// Queries a subject pair is evaluated on: an explicit list pins its own query.
fn subject_queries(prep: &Prepared<'_>, subjects: &[&Subject]) -> Result<Vec<String>> {
    let pinned: Vec<&str> = subjects
        .iter()
        .filter_map(|s| match s {
            Subject::List(l) => Some(l.query_id()),
            _ => None,
        })
        .collect();
    match pinned.as_slice() {
        [] => Ok(prep.queries.iter().map(|q| q.query_id.clone()).collect()),
        [q] => Ok(vec![q.to_string()]),
        [a, b] if a == b => Ok(vec![a.to_string()]),
        _ => Err(BiasError::Input(
            "explicit subject lists answer different queries".into(),
        )),
    }
}

/// Dense `m + 1` attribute distribution of a subject on one query.
fn subject_distribution(
    prep: &Prepared<'_>,
    sample: &Sample,
    subject: &Subject,
    query_id: &str,
) -> Result<Vec<f64>> {
    let cfg = prep.input.config();
    match subject {
        Subject::List(list) => {
            let d = attribute_distribution(list, prep.input.attribute(), cfg.k, cfg.weighting)?;
            let mut v = d.probabilities().to_vec();
            v.push(d.unannotated());
            Ok(v)
        }
        Subject::User(user_id) => {
            let q = query(prep, query_id)?;
            let u = prep
                .input
                .profiles()
                .iter()
                .position(|p| p.user_id() == user_id)
                .ok_or_else(|| BiasError::Input(format!("unknown user {user_id:?}")))?;
            Ok(prep.list(q, u)?.dist.clone())
        }
        Subject::Class(side) => {
            let q = query(prep, query_id)?;
            if sample.class_size(*side) == 0 {
                return Err(BiasError::Input(format!(
                    "class {} has no users",
                    side.label()
                )));
            }
            let other = match side {
                ClassSide::Protected => ClassSide::Unprotected,
                ClassSide::Unprotected => ClassSide::Protected,
            };
            if sample.class_size(other) == 0 {
                let depth = prep.representative_depth(q, sample);
                return Ok(prep.representative(q, sample.class(*side), depth)?.dist);
            }
            let (p, pbar) = prep.class_representatives(q, sample)?;
            Ok(match side {
                ClassSide::Protected => p.dist.clone(),
                ClassSide::Unprotected => pbar.dist.clone(),
            })
        }
    }
}

fn undefined(query_id: &str) -> BiasError {
    BiasError::MeasureUndefined(format!(
        "no annotated results to compare on query {query_id:?}"
    ))
}

fn subject_label(s: &Subject) -> String {
    match s {
        Subject::User(u) => format!("user:{u}"),
        Subject::Class(side) => format!("class:{}", side.label()),
        Subject::List(l) => format!("list:{}/{}", l.user_id(), l.query_id()),
    }
}

/// Max-norm distance between a subject's attribute distribution and the
/// ground truth.
pub fn content_bias(input: &AuditInput, subject: &Subject) -> Result<BiasVerdict> {
    let prep = Prepared::new(input)?;
    evaluate_content(&prep, &prep.full_sample(), subject)
}

pub(crate) fn evaluate_content(
    prep: &Prepared<'_>,
    sample: &Sample,
    subject: &Subject,
) -> Result<BiasVerdict> {
    if !prep.input.has_ground_truth() {
        return Err(BiasError::Mode(
            "content bias needs ground truth; use a comparative audit instead".into(),
        ));
    }
    let cfg = prep.input.config();
    let mut per_query = Vec::new();
    for qid in subject_queries(prep, &[subject])? {
        let truth = truth_for(prep, &qid)?;
        let dist = subject_distribution(prep, sample, subject, &qid)?;
        let d = dense_distance(&dist, &truth).ok_or_else(|| undefined(&qid))?;
        per_query.push((qid, d));
    }
    Ok(BiasVerdict::from_per_query(
        "content_bias",
        per_query,
        cfg.query_aggregation,
        cfg.epsilon_distribution(),
    )
    .diag("subject", subject_label(subject)))
}

/// `max_i |Pr(u1, a_i) - Pr(u2, a_i)|`: zero whenever both subjects see the
/// same attribute distribution, whatever the ground truth.
pub fn combined_bias(input: &AuditInput, first: &Subject, second: &Subject) -> Result<BiasVerdict> {
    let prep = Prepared::new(input)?;
    evaluate_combined(&prep, &prep.full_sample(), first, second)
}

pub(crate) fn evaluate_combined(
    prep: &Prepared<'_>,
    sample: &Sample,
    first: &Subject,
    second: &Subject,
) -> Result<BiasVerdict> {
    let cfg = prep.input.config();
    let mut per_query = Vec::new();
    for qid in subject_queries(prep, &[first, second])? {
        let a = subject_distribution(prep, sample, first, &qid)?;
        let b = subject_distribution(prep, sample, second, &qid)?;
        let d = dense_distance(&a, &b).ok_or_else(|| undefined(&qid))?;
        per_query.push((qid, d));
    }
    Ok(BiasVerdict::from_per_query(
        "combined_bias",
        per_query,
        cfg.query_aggregation,
        cfg.epsilon_distribution(),
    )
    .diag("subjects", [subject_label(first), subject_label(second)]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoChamberResult {
    /// Magnitude is `max_i |dev_P(a_i) - dev_P̄(a_i)| / 2`, query-aggregated.
    pub verdict: BiasVerdict,
    /// Some value is over-represented beyond ε for one class and
    /// under-represented beyond ε for the other.
    pub flagged: bool,
    pub flagged_values: Vec<String>,
    /// Signed deviation from ground truth per value, folded over queries.
    pub deviation_protected: BTreeMap<String, f64>,
    pub deviation_unprotected: BTreeMap<String, f64>,
    /// Content bias of each class representative.
    pub content_protected: f64,
    pub content_unprotected: f64,
}

/// Opposite-direction over/under-representation of attribute values between
/// the two class representatives.
pub fn echo_chamber_test(input: &AuditInput) -> Result<EchoChamberResult> {
    let prep = Prepared::new(input)?;
    evaluate_echo(&prep, &prep.full_sample())
}

fn renormalized(d: &[f64], query_id: &str) -> Result<Vec<f64>> {
    let m = d.len() - 1;
    let mass: f64 = d[..m].iter().sum();
    if mass <= 0.0 {
        return Err(undefined(query_id));
    }
    Ok(d[..m].iter().map(|x| x / mass).collect())
}

fn opposite(a: f64, b: f64, eps: f64) -> bool {
    (a > eps && b < -eps) || (a < -eps && b > eps)
}

pub(crate) fn evaluate_echo(prep: &Prepared<'_>, sample: &Sample) -> Result<EchoChamberResult> {
    if !prep.input.has_ground_truth() {
        return Err(BiasError::Mode(
            "echo-chamber test needs ground truth".into(),
        ));
    }
    for side in [ClassSide::Protected, ClassSide::Unprotected] {
        if sample.class_size(side) == 0 {
            return Err(BiasError::Input(format!(
                "class {} has no users",
                side.label()
            )));
        }
    }
    let cfg = prep.input.config();
    let eps = cfg.epsilon_distribution();
    let values = prep.input.attribute().values();
    let m = prep.m;

    let mut per_query = Vec::new();
    let mut devs_p: Vec<Vec<f64>> = Vec::new();
    let mut devs_pbar: Vec<Vec<f64>> = Vec::new();
    let mut content_p = Vec::new();
    let mut content_pbar = Vec::new();
    let mut flagged_queries = Vec::new();
    for q in &prep.queries {
        let truth = truth_for(prep, &q.query_id)?;
        let (rp, rpbar) = prep.class_representatives(q, sample)?;
        let dp: Vec<f64> = renormalized(&rp.dist, &q.query_id)?
            .iter()
            .zip(&truth)
            .map(|(x, t)| x - t)
            .collect();
        let dpbar: Vec<f64> = renormalized(&rpbar.dist, &q.query_id)?
            .iter()
            .zip(&truth)
            .map(|(x, t)| x - t)
            .collect();
        let magnitude = max_abs_diff(&dp, &dpbar) / 2.0;
        per_query.push((q.query_id.clone(), magnitude));
        content_p.push(dp.iter().map(|x| x.abs()).fold(0.0, f64::max));
        content_pbar.push(dpbar.iter().map(|x| x.abs()).fold(0.0, f64::max));
        if (0..m).any(|i| opposite(dp[i], dpbar[i], eps)) {
            flagged_queries.push(q.query_id.clone());
        }
        devs_p.push(dp);
        devs_pbar.push(dpbar);
    }

    let fold = |devs: &[Vec<f64>]| -> Vec<f64> {
        let n = devs.len().max(1) as f64;
        (0..m)
            .map(|i| match cfg.query_aggregation {
                QueryAggregation::Mean => devs.iter().map(|d| d[i]).sum::<f64>() / n,
                // Signed value of largest magnitude.
                QueryAggregation::Max => {
                    devs.iter()
                        .map(|d| d[i])
                        .fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc })
                }
            })
            .collect()
    };
    let mean_p = fold(&devs_p);
    let mean_pbar = fold(&devs_pbar);
    let flagged_values: Vec<String> = match cfg.query_aggregation {
        QueryAggregation::Mean => (0..m)
            .filter(|&i| opposite(mean_p[i], mean_pbar[i], eps))
            .map(|i| values[i].clone())
            .collect(),
        QueryAggregation::Max => (0..m)
            .filter(|&i| {
                devs_p
                    .iter()
                    .zip(&devs_pbar)
                    .any(|(a, b)| opposite(a[i], b[i], eps))
            })
            .map(|i| values[i].clone())
            .collect(),
    };
    let named = |v: &[f64]| -> BTreeMap<String, f64> {
        values.iter().cloned().zip(v.iter().copied()).collect()
    };
    let verdict =
        BiasVerdict::from_per_query("echo_chamber", per_query, cfg.query_aggregation, eps)
            .diag("flagged_queries", &flagged_queries);
    Ok(EchoChamberResult {
        flagged: !flagged_values.is_empty(),
        flagged_values,
        deviation_protected: named(&mean_p),
        deviation_unprotected: named(&mean_pbar),
        content_protected: cfg.query_aggregation.apply(&content_p),
        content_unprotected: cfg.query_aggregation.apply(&content_pbar),
        verdict,
    })
}
