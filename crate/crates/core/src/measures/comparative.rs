use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BiasVerdict, MeasureConfig};
use crate::error::{BiasError, Result};
use crate::ranking::distribution::require_differentiating;
use crate::ranking::{
    attribute_distribution, distribution_distance, kendall_distance, rbo_distance,
    topk_overlap_distance, AttributeSchema, ListDistanceKind, RankedList,
};

/// Two providers compared on a shared query battery, without ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparativeVerdict {
    /// Max-norm difference of attribute distributions per query.
    pub distribution: BiasVerdict,
    /// Configured list-space distance per query.
    pub list: BiasVerdict,
    pub shared_queries: Vec<String>,
    /// Queries only one provider answered.
    pub unmatched_queries: Vec<String>,
}

fn list_distance(
    a: &RankedList,
    b: &RankedList,
    attr: &AttributeSchema,
    cfg: &MeasureConfig,
) -> Result<f64> {
    match cfg.dr_kind {
        ListDistanceKind::Kendall => Ok(kendall_distance(a, b)),
        ListDistanceKind::Rbo => rbo_distance(a, b, cfg.rbo_persistence),
        ListDistanceKind::TopK => topk_overlap_distance(a, b, cfg.k),
        ListDistanceKind::Attribute => distribution_distance(
            &attribute_distribution(a, attr, cfg.k, cfg.weighting)?,
            &attribute_distribution(b, attr, cfg.k, cfg.weighting)?,
        ),
    }
}

/// Compares the lists two providers returned for the same queries.
pub fn comparative_bias(
    lists_a: &BTreeMap<String, RankedList>,
    lists_b: &BTreeMap<String, RankedList>,
    attr: &AttributeSchema,
    config: &MeasureConfig,
) -> Result<ComparativeVerdict> {
    config.validate()?;
    require_differentiating(attr)?;
    let shared: Vec<String> = lists_a
        .keys()
        .filter(|q| lists_b.contains_key(*q))
        .cloned()
        .collect();
    if shared.is_empty() {
        return Err(BiasError::Input("the two providers share no query".into()));
    }
    let unmatched: Vec<String> = lists_a
        .keys()
        .chain(lists_b.keys())
        .filter(|q| !(lists_a.contains_key(*q) && lists_b.contains_key(*q)))
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut dist = Vec::new();
    let mut list = Vec::new();
    for q in &shared {
        let (a, b) = (&lists_a[q], &lists_b[q]);
        let da = attribute_distribution(a, attr, config.k, config.weighting)?;
        let db = attribute_distribution(b, attr, config.k, config.weighting)?;
        dist.push((q.clone(), distribution_distance(&da, &db)?));
        list.push((q.clone(), list_distance(a, b, attr, config)?));
    }
    Ok(ComparativeVerdict {
        distribution: BiasVerdict::from_per_query(
            "comparative_distribution",
            dist,
            config.query_aggregation,
            config.epsilon_distribution(),
        ),
        list: BiasVerdict::from_per_query(
            "comparative_list",
            list,
            config.query_aggregation,
            config.epsilon_list(),
        )
        .diag("list_distance", config.dr_kind),
        shared_queries: shared,
        unmatched_queries: unmatched,
    })
}
