use rayon::prelude::*;
use serde::Serialize;

use super::prepared::{Prepared, Sample};
use super::{AuditInput, BiasVerdict, VIOLATION_TOLERANCE};
use crate::error::{BiasError, Result};
use crate::ranking::indexed::Scratch;
use crate::ranking::user_distance;

const TOP_PAIRS: usize = 10;

#[derive(Debug, Clone, Serialize)]
struct Violation {
    violation: f64,
    user_a: String,
    user_b: String,
    query_id: String,
    list_distance: f64,
    user_distance: f64,
}

fn rank_violations(v: &mut Vec<Violation>) {
    v.sort_by(|a, b| {
        b.violation
            .total_cmp(&a.violation)
            .then_with(|| a.user_a.cmp(&b.user_a))
            .then_with(|| a.user_b.cmp(&b.user_b))
            .then_with(|| a.query_id.cmp(&b.query_id))
    });
    v.truncate(TOP_PAIRS);
}

struct Acc {
    per_query: Vec<f64>,
    top: Vec<Violation>,
    compared: u64,
    skipped: u64,
    scratch: Scratch,
}

impl Acc {
    fn merge(mut self, other: Acc) -> Acc {
        for (a, b) in self.per_query.iter_mut().zip(&other.per_query) {
            *a = a.max(*b);
        }
        self.top.extend(other.top);
        rank_violations(&mut self.top);
        self.compared += other.compared;
        self.skipped += other.skipped;
        self
    }
}

/// Largest violation of `D_R(R_u1, R_u2) <= D_u(u1, u2)` over user pairs.
///
/// Per query the magnitude is the maximum of `max(0, D_R - D_u)` over pairs;
/// queries are folded with the configured aggregation and the threshold is 0.
/// Pairs farther apart than `pair_radius` are not compared.
pub fn individual_user_bias(input: &AuditInput) -> Result<BiasVerdict> {
    let prep = Prepared::new(input)?;
    evaluate_individual(&prep, &prep.full_sample(), true)
}

pub(crate) fn evaluate_individual(
    prep: &Prepared<'_>,
    sample: &Sample,
    detailed: bool,
) -> Result<BiasVerdict> {
    let cfg = prep.input.config();
    let n = sample.members.len();
    if n < 2 {
        return Err(BiasError::MeasureUndefined(
            "individual user bias needs at least two users".into(),
        ));
    }
    if cfg.relevant_attributes.is_empty() {
        return Err(BiasError::Parameter(
            "individual user bias needs relevant_attributes for the user distance".into(),
        ));
    }
    for q in &prep.queries {
        for &u in &sample.members {
            prep.list(q, u)?;
        }
    }
    let profiles = prep.input.profiles();
    let metric = prep.metric();
    let n_queries = prep.queries.len();
    let max_universe = prep
        .queries
        .iter()
        .map(|q| q.universe.len())
        .max()
        .unwrap_or(0);
    let init = || Acc {
        per_query: vec![0.0; n_queries],
        top: Vec::new(),
        compared: 0,
        skipped: 0,
        scratch: Scratch::with_universe(max_universe),
    };

    let acc = (0..n)
        .into_par_iter()
        .try_fold(init, |mut acc, i| -> Result<Acc> {
            let u1 = sample.members[i];
            for &u2 in &sample.members[i + 1..] {
                let du = if u1 == u2 {
                    0.0
                } else {
                    user_distance(&profiles[u1], &profiles[u2], &cfg.relevant_attributes)?
                };
                // D_R never exceeds 1, so such pairs cannot violate.
                if du > cfg.pair_radius || du >= 1.0 || u1 == u2 {
                    acc.skipped += 1;
                    continue;
                }
                acc.compared += 1;
                for (qi, q) in prep.queries.iter().enumerate() {
                    let a = q.lists[u1].as_ref().expect("checked").view();
                    let b = q.lists[u2].as_ref().expect("checked").view();
                    let dr = metric.distance(a, b, &mut acc.scratch)?;
                    let v = dr - du;
                    if v > VIOLATION_TOLERANCE {
                        acc.per_query[qi] = acc.per_query[qi].max(v);
                        if detailed {
                            let (ua, ub) = {
                                let (x, y) = (prep.user_id(u1), prep.user_id(u2));
                                if x <= y {
                                    (x, y)
                                } else {
                                    (y, x)
                                }
                            };
                            acc.top.push(Violation {
                                violation: v,
                                user_a: ua.to_string(),
                                user_b: ub.to_string(),
                                query_id: q.query_id.clone(),
                                list_distance: dr,
                                user_distance: du,
                            });
                            if acc.top.len() > 4 * TOP_PAIRS {
                                rank_violations(&mut acc.top);
                            }
                        }
                    }
                }
            }
            Ok(acc)
        })
        .try_reduce(init, |a, b| Ok(a.merge(b)))?;

    let per_query = prep
        .queries
        .iter()
        .zip(&acc.per_query)
        .map(|(q, &v)| (q.query_id.clone(), v))
        .collect();
    let mut verdict = BiasVerdict::from_per_query(
        "individual_user_bias",
        per_query,
        cfg.query_aggregation,
        0.0,
    );
    if detailed {
        let mut top = acc.top;
        rank_violations(&mut top);
        verdict = verdict
            .diag("top_violations", top)
            .diag("pairs_compared", acc.compared)
            .diag("pairs_skipped", acc.skipped)
            .diag("list_distance", cfg.dr_kind);
    }
    Ok(verdict)
}
