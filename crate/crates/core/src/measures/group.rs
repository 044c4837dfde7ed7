use super::prepared::{Prepared, Sample};
use super::{AuditInput, BiasVerdict, ClassSide};
use crate::error::{BiasError, Result};
use crate::ranking::indexed::Scratch;

fn check_classes(sample: &Sample) -> Result<()> {
    for side in [ClassSide::Protected, ClassSide::Unprotected] {
        if sample.class_size(side) == 0 {
            return Err(BiasError::Input(format!(
                "class {} has no users",
                side.label()
            )));
        }
    }
    Ok(())
}

/// `|D_R(R_P, R_P̄)|` between the aggregated class representatives.
pub fn group_user_bias(input: &AuditInput) -> Result<BiasVerdict> {
    let prep = Prepared::new(input)?;
    evaluate_group(&prep, &prep.full_sample(), true)
}

pub(crate) fn evaluate_group(
    prep: &Prepared<'_>,
    sample: &Sample,
    detailed: bool,
) -> Result<BiasVerdict> {
    check_classes(sample)?;
    let cfg = prep.input.config();
    let metric = prep.metric();
    let mut scratch = Scratch::default();
    let mut per_query = Vec::with_capacity(prep.queries.len());
    let mut reps = serde_json::Map::new();
    for q in &prep.queries {
        scratch.ensure(q.universe.len());
        let (p, pbar) = prep.class_representatives(q, sample)?;
        let d = metric.distance(p.view(), pbar.view(), &mut scratch)?;
        per_query.push((q.query_id.clone(), d.abs()));
        if detailed {
            let names = |ids: &[u32]| -> Vec<String> {
                ids.iter()
                    .map(|&i| q.universe.name(i).to_string())
                    .collect()
            };
            reps.insert(
                q.query_id.clone(),
                serde_json::json!({ "P": names(&p.ids), "P-bar": names(&pbar.ids) }),
            );
        }
    }
    let mut v = BiasVerdict::from_per_query(
        "group_user_bias",
        per_query,
        cfg.query_aggregation,
        cfg.epsilon_list(),
    );
    if detailed {
        v = v
            .diag("representatives", reps)
            .diag("aggregator", cfg.aggregator)
            .diag("list_distance", cfg.dr_kind);
    }
    Ok(v)
}

/// Total-variation distance between the list-variant distributions of the
/// two classes, after merging variants within `cluster_radius`.
pub fn probabilistic_group_bias(input: &AuditInput) -> Result<BiasVerdict> {
    let prep = Prepared::new(input)?;
    evaluate_probabilistic(&prep, &prep.full_sample(), true)
}

pub(crate) fn evaluate_probabilistic(
    prep: &Prepared<'_>,
    sample: &Sample,
    detailed: bool,
) -> Result<BiasVerdict> {
    check_classes(sample)?;
    let cfg = prep.input.config();
    let clusters = prep.clusters()?;
    let mut per_query = Vec::with_capacity(prep.queries.len());
    let mut degenerate = Vec::new();
    let mut sizes = serde_json::Map::new();
    for (q, qc) in prep.queries.iter().zip(clusters) {
        if qc.n_variants < 2 {
            per_query.push((q.query_id.clone(), 0.0));
            degenerate.push(q.query_id.clone());
            continue;
        }
        let mut count_p = vec![0u64; qc.n_clusters];
        let mut count_pbar = vec![0u64; qc.n_clusters];
        let (mut n_p, mut n_pbar) = (0u64, 0u64);
        for (&u, &in_p) in sample.members.iter().zip(&sample.in_p) {
            let c = qc.cluster_of[u].ok_or_else(|| {
                BiasError::Input(format!(
                    "user {:?} has no list for query {:?}",
                    prep.user_id(u),
                    q.query_id
                ))
            })? as usize;
            if in_p {
                count_p[c] += 1;
                n_p += 1;
            } else {
                count_pbar[c] += 1;
                n_pbar += 1;
            }
        }
        let tv = 0.5
            * count_p
                .iter()
                .zip(&count_pbar)
                .map(|(&a, &b)| (a as f64 / n_p as f64 - b as f64 / n_pbar as f64).abs())
                .sum::<f64>();
        per_query.push((q.query_id.clone(), tv.min(1.0)));
        if detailed {
            sizes.insert(
                q.query_id.clone(),
                serde_json::json!({ "variants": qc.n_variants, "clusters": qc.n_clusters }),
            );
        }
    }
    let mut v = BiasVerdict::from_per_query(
        "probabilistic_group_bias",
        per_query,
        cfg.query_aggregation,
        cfg.epsilon_list(),
    );
    if detailed {
        v = v
            .diag("degenerate_queries", degenerate)
            .diag("variants", sizes)
            .diag("cluster_radius", cfg.cluster_radius);
    }
    Ok(v)
}
