//! Representative lists for a class of users.
//!
//! Each aggregator first computes an order over interned item ids; the
//! public functions then rebuild items with annotations averaged over every
//! occurrence of the item in the collection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{BiasError, Result};
use crate::ranking::indexed::Universe;
use crate::ranking::{kendall_detail, RankedList, ResultItem, WeightMap, UNANNOTATED};

/// Largest item union [`kemeny_exact`] accepts.
pub const KEMENY_MAX_ITEMS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Borda,
    Median,
    Kemeny,
}

/// The lists seen by one class of users for one query battery.
#[derive(Debug, Clone, PartialEq)]
pub struct ListCollection {
    pub label: String,
    pub lists: Vec<RankedList>,
}

impl ListCollection {
    pub fn new(label: impl Into<String>, lists: Vec<RankedList>) -> Self {
        ListCollection {
            label: label.into(),
            lists,
        }
    }

    fn check_non_empty(&self) -> Result<()> {
        if self.lists.is_empty() {
            return Err(BiasError::Input(format!(
                "cannot aggregate empty collection {:?}",
                self.label
            )));
        }
        Ok(())
    }

    fn interned(&self) -> (Universe, Vec<Vec<u32>>) {
        let universe = Universe::from_names(self.lists.iter().flat_map(|l| l.item_ids()));
        let ids = self
            .lists
            .iter()
            .map(|l| {
                l.item_ids()
                    .map(|n| universe.id(n).expect("interned"))
                    .collect()
            })
            .collect();
        (universe, ids)
    }
}

fn check_depth(k: usize) -> Result<()> {
    if k == 0 {
        return Err(BiasError::Parameter(
            "aggregation depth must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Borda order: an item at rank r of a depth-d list scores `d - r + 1`.
/// Highest total first, ties by item id.
pub(crate) fn borda_order<L: AsRef<[u32]>>(lists: &[L], universe: usize, k: usize) -> Vec<u32> {
    let mut score = vec![0u64; universe];
    let mut present = vec![false; universe];
    for list in lists {
        let list = list.as_ref();
        let d = list.len() as u64;
        for (r, &id) in list.iter().enumerate() {
            score[id as usize] += d - r as u64;
            present[id as usize] = true;
        }
    }
    let mut candidates: Vec<u32> = (0..universe as u32)
        .filter(|&i| present[i as usize])
        .collect();
    candidates.sort_by(|&a, &b| score[b as usize].cmp(&score[a as usize]).then(a.cmp(&b)));
    candidates.truncate(k);
    candidates
}

/// Median-rank order; an item absent from a depth-d list takes rank d+1.
/// Ties by mean rank, then item id.
pub(crate) fn median_order<L: AsRef<[u32]>>(lists: &[L], universe: usize, k: usize) -> Vec<u32> {
    let n_lists = lists.len();
    // ranks[id] collects ranks of lists that contain id; absentees are added after.
    let mut ranks: Vec<Vec<u32>> = vec![Vec::new(); universe];
    let mut present = vec![false; universe];
    for list in lists {
        for (r, &id) in list.as_ref().iter().enumerate() {
            ranks[id as usize].push(r as u32 + 1);
            present[id as usize] = true;
        }
    }
    let mut keyed: Vec<(f64, f64, u32)> = Vec::new();
    for id in (0..universe as u32).filter(|&i| present[i as usize]) {
        let mut rs = Vec::with_capacity(n_lists);
        for list in lists {
            let list = list.as_ref();
            match list.iter().position(|&x| x == id) {
                Some(r) => rs.push(r as u32 + 1),
                None => rs.push(list.len() as u32 + 1),
            }
        }
        rs.sort_unstable();
        let median = if n_lists % 2 == 1 {
            f64::from(rs[n_lists / 2])
        } else {
            (f64::from(rs[n_lists / 2 - 1]) + f64::from(rs[n_lists / 2])) / 2.0
        };
        let mean = rs.iter().map(|&r| f64::from(r)).sum::<f64>() / n_lists as f64;
        keyed.push((median, mean, id));
    }
    keyed.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    keyed.truncate(k);
    keyed.into_iter().map(|(_, _, id)| id).collect()
}

/// Kemeny-optimal order of the whole item union, lexicographically smallest
/// among optima.
///
/// The Kendall penalty against a top-k list splits into a per-pair cost of
/// placing `i` before `j`, so the optimum is found by dynamic programming
/// over the set of already placed items.
pub(crate) fn kemeny_order<L: AsRef<[u32]>>(lists: &[L], universe: usize) -> Result<Vec<u32>> {
    let mut present = vec![false; universe];
    for list in lists {
        for &id in list.as_ref() {
            present[id as usize] = true;
        }
    }
    let items: Vec<u32> = (0..universe as u32)
        .filter(|&i| present[i as usize])
        .collect();
    let n = items.len();
    if n > KEMENY_MAX_ITEMS {
        return Err(BiasError::Complexity(format!(
            "exact Kemeny aggregation supports at most {KEMENY_MAX_ITEMS} items, got {n}"
        )));
    }
    let mut local = vec![usize::MAX; universe];
    for (i, &id) in items.iter().enumerate() {
        local[id as usize] = i;
    }
    // cost[i][j]: number of lists that rank j above i.
    let mut cost = vec![vec![0u64; n]; n];
    for list in lists {
        let list = list.as_ref();
        let mut rank = vec![usize::MAX; n];
        for (r, &id) in list.iter().enumerate() {
            rank[local[id as usize]] = r;
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && rank[j] < rank[i] {
                    cost[i][j] += 1;
                }
            }
        }
    }
    let full = (1usize << n) - 1;
    // before[j][mask]: cost of placing j ahead of every item in mask.
    let place = |j: usize, remaining: usize| -> u64 {
        (0..n)
            .filter(|&i| i != j && remaining & (1 << i) != 0)
            .map(|i| cost[j][i])
            .sum()
    };
    let mut best = vec![u64::MAX; full + 1];
    best[full] = 0;
    for placed in (0..full).rev() {
        let remaining = full & !placed;
        let mut b = u64::MAX;
        for j in (0..n).filter(|&j| remaining & (1 << j) != 0) {
            let c = place(j, remaining) + best[placed | (1 << j)];
            b = b.min(c);
        }
        best[placed] = b;
    }
    let mut order = Vec::with_capacity(n);
    let mut placed = 0usize;
    while placed != full {
        let remaining = full & !placed;
        let j = (0..n)
            .find(|&j| {
                remaining & (1 << j) != 0
                    && place(j, remaining) + best[placed | (1 << j)] == best[placed]
            })
            .expect("optimal continuation exists");
        order.push(items[j]);
        placed |= 1 << j;
    }
    Ok(order)
}

pub(crate) fn order_with<L: AsRef<[u32]>>(
    method: Aggregator,
    lists: &[L],
    universe: usize,
    k: usize,
) -> Result<Vec<u32>> {
    Ok(match method {
        Aggregator::Borda => borda_order(lists, universe, k),
        Aggregator::Median => median_order(lists, universe, k),
        Aggregator::Kemeny => {
            let mut o = kemeny_order(lists, universe)?;
            o.truncate(k);
            o
        }
    })
}

/// Averages every attribute's weight map over the occurrences of each item.
/// Occurrences without an attribute count as fully unannotated for it.
fn averaged_items(
    c: &ListCollection,
    universe: &Universe,
    order: &[u32],
) -> Result<Vec<ResultItem>> {
    let mut occurrences: Vec<Vec<&ResultItem>> = vec![Vec::new(); universe.len()];
    for list in &c.lists {
        for item in list.items() {
            let id = universe.id(item.item_id()).expect("interned");
            occurrences[id as usize].push(item);
        }
    }
    order
        .iter()
        .map(|&id| {
            let occ = &occurrences[id as usize];
            let n = occ.len() as f64;
            let mut attrs: BTreeMap<String, WeightMap> = BTreeMap::new();
            for item in occ {
                for attr in item.annotations().keys() {
                    attrs.entry(attr.clone()).or_default();
                }
            }
            for (attr, acc) in attrs.iter_mut() {
                for item in occ {
                    match item.annotation(attr) {
                        Some(w) => {
                            for (v, x) in w {
                                *acc.entry(v.clone()).or_insert(0.0) += x / n;
                            }
                        }
                        None => *acc.entry(UNANNOTATED.to_string()).or_insert(0.0) += 1.0 / n,
                    }
                }
                renormalize(acc);
            }
            ResultItem::new(universe.name(id), attrs)
        })
        .collect()
}

// Averaging n weight vectors drifts from 1 by a few ulps.
fn renormalize(w: &mut WeightMap) {
    let total: f64 = w.values().sum();
    if total > 0.0 {
        w.values_mut().for_each(|x| *x /= total);
    }
}

fn build(c: &ListCollection, universe: &Universe, order: &[u32]) -> Result<RankedList> {
    let items = averaged_items(c, universe, order)?;
    RankedList::new(c.lists[0].query_id(), c.label.clone(), items)
}

/// Top-`k` Borda aggregate.
pub fn aggregate_borda(c: &ListCollection, k: usize) -> Result<RankedList> {
    aggregate(c, Aggregator::Borda, k)
}

/// Top-`k` median-rank aggregate.
pub fn aggregate_median_rank(c: &ListCollection, k: usize) -> Result<RankedList> {
    aggregate(c, Aggregator::Median, k)
}

/// Exact Kemeny aggregate over the full item union (at most
/// [`KEMENY_MAX_ITEMS`] items).
pub fn kemeny_exact(c: &ListCollection) -> Result<RankedList> {
    c.check_non_empty()?;
    let (universe, ids) = c.interned();
    let order = kemeny_order(&ids, universe.len())?;
    build(c, &universe, &order)
}

pub fn aggregate(c: &ListCollection, method: Aggregator, k: usize) -> Result<RankedList> {
    c.check_non_empty()?;
    check_depth(k)?;
    let (universe, ids) = c.interned();
    let order = order_with(method, &ids, universe.len(), k)?;
    build(c, &universe, &order)
}

/// Total un-normalized Kendall penalty of `candidate` against every list.
pub fn kemeny_score(c: &ListCollection, candidate: &RankedList) -> f64 {
    c.lists
        .iter()
        .map(|l| kendall_detail(candidate, l).penalty)
        .sum()
}
