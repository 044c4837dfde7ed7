use serde::{Deserialize, Serialize};

use super::indexed::{self, Scratch, Universe};
use super::RankedList;
use crate::error::{BiasError, Result};

/// Which list-space distance a measure uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListDistanceKind {
    /// Normalized Kendall distance with neutral penalty 1/2.
    #[default]
    Kendall,
    /// One minus extrapolated rank-biased overlap.
    Rbo,
    /// One minus top-k overlap.
    TopK,
    /// Max-norm between attribute distributions of the two lists.
    Attribute,
}

impl ListDistanceKind {
    /// True when the distance only looks at attribute distributions.
    pub fn is_distribution_based(self) -> bool {
        matches!(self, ListDistanceKind::Attribute)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallDetail {
    pub distance: f64,
    /// Total penalty before normalization.
    pub penalty: f64,
    /// Number of item pairs in the union of both lists.
    pub pairs: u64,
    /// No pair of items exists, so the distance is 0 by convention.
    pub degenerate: bool,
}

fn intern_pair(a: &RankedList, b: &RankedList) -> (Vec<u32>, Vec<u32>, Scratch) {
    let universe = Universe::from_names(a.item_ids().chain(b.item_ids()));
    let ids = |l: &RankedList| -> Vec<u32> {
        l.item_ids()
            .map(|n| universe.id(n).expect("interned"))
            .collect()
    };
    (ids(a), ids(b), Scratch::with_universe(universe.len()))
}

/// Kendall distance with its raw penalty and degeneracy flag.
pub fn kendall_detail(a: &RankedList, b: &RankedList) -> KendallDetail {
    let (ia, ib, mut s) = intern_pair(a, b);
    let counts = indexed::kendall_counts(&ia, &ib, &mut s);
    KendallDetail {
        distance: counts.normalized(),
        penalty: counts.doubled_penalty as f64 / 2.0,
        pairs: counts.pairs(),
        degenerate: counts.pairs() == 0,
    }
}

/// Normalized Kendall distance between two top-k lists.
///
/// Items missing from one list are treated as ranked below all of its items;
/// pairs of items that only one list contains cost 1/2. The penalty is
/// divided by the number of pairs in the union of both lists.
pub fn kendall_distance(a: &RankedList, b: &RankedList) -> f64 {
    kendall_detail(a, b).distance
}

/// `1 - RBO_ext(a, b, p)`.
pub fn rbo_distance(a: &RankedList, b: &RankedList, persistence: f64) -> Result<f64> {
    check_persistence(persistence)?;
    let (ia, ib, mut s) = intern_pair(a, b);
    Ok(1.0 - indexed::rbo_ext(&ia, &ib, persistence, &mut s))
}

pub(crate) fn check_persistence(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(BiasError::Parameter(format!(
            "RBO persistence must lie in (0, 1), got {p}"
        )))
    }
}

/// `1 - |top_k(a) ∩ top_k(b)| / k'` where `k'` is the larger of the two
/// usable prefix depths `min(k, depth)`.
pub fn topk_overlap_distance(a: &RankedList, b: &RankedList, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(BiasError::Parameter(
            "top-k depth must be at least 1".into(),
        ));
    }
    let (ia, ib, mut s) = intern_pair(a, b);
    Ok(1.0 - indexed::topk_overlap(&ia, &ib, k, &mut s))
}
