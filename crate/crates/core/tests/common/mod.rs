//! Reference implementations and generators shared by the test suites.
#![allow(dead_code)]

use biasmeter::ranking::{RankedList, ResultItem, WeightMap};
use biasmeter::rng::SimRng;
use std::collections::BTreeMap;

/// Twice the top-k Kendall penalty with p = 1/2, by direct pair enumeration.
///
/// For each pair of items in the union: if both lists order the pair (both
/// items present, or one present and so ranked above the absent one), the
/// penalty is 1 when they disagree; if one list holds neither item the
/// penalty is 1/2.
pub fn kendall_penalty_doubled(a: &[String], b: &[String]) -> u64 {
    let union = union_of(a, b);
    let pos = |l: &[String], x: &String| l.iter().position(|y| y == x);
    // Some(true) when the list ranks x above y.
    let order = |l: &[String], x: &String, y: &String| match (pos(l, x), pos(l, y)) {
        (Some(i), Some(j)) => Some(i < j),
        (Some(_), None) => Some(true),
        (None, Some(_)) => Some(false),
        (None, None) => None,
    };
    let mut total = 0;
    for i in 0..union.len() {
        for j in i + 1..union.len() {
            let (x, y) = (&union[i], &union[j]);
            total += match (order(a, x, y), order(b, x, y)) {
                (Some(p), Some(q)) => 2 * u64::from(p != q),
                _ => 1,
            };
        }
    }
    total
}

pub fn union_of(a: &[String], b: &[String]) -> Vec<String> {
    let mut union: Vec<String> = a.iter().chain(b).cloned().collect();
    union.sort();
    union.dedup();
    union
}

/// Normalized top-k Kendall distance over the union's pairs.
pub fn kendall_oracle(a: &[String], b: &[String]) -> f64 {
    let n = union_of(a, b).len() as u64;
    let pairs = n * n.saturating_sub(1) / 2;
    if pairs == 0 {
        return 0.0;
    }
    kendall_penalty_doubled(a, b) as f64 / (2 * pairs) as f64
}

/// Every permutation of `items`, in lexicographic order of positions.
pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("i{i:02}")).collect()
}

/// A random list of `depth` distinct items from a pool of `pool` names.
pub fn random_ids(rng: &mut SimRng, pool: usize, depth: usize) -> Vec<String> {
    let all = names(pool);
    rng.sample_indices(pool, depth)
        .into_iter()
        .map(|i| all[i].clone())
        .collect()
}

pub fn list_of(ids: &[String]) -> RankedList {
    RankedList::from_ids("q", "u", ids).unwrap()
}

/// A list whose items carry random fractional annotations over `values`.
pub fn annotated_list(rng: &mut SimRng, ids: &[String], attr: &str, values: &[&str]) -> RankedList {
    let items = ids
        .iter()
        .map(|id| {
            let raw: Vec<f64> = values.iter().map(|_| rng.uniform() + 0.01).collect();
            let total: f64 = raw.iter().sum();
            let weights: WeightMap = values
                .iter()
                .zip(&raw)
                .map(|(v, w)| (v.to_string(), w / total))
                .collect();
            ResultItem::new(id.clone(), BTreeMap::from([(attr.to_string(), weights)])).unwrap()
        })
        .collect();
    RankedList::new("q", "u", items).unwrap()
}
