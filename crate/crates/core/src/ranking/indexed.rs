//! Dense-id kernels shared by the public distance functions and the bulk
//! measure code.
//!
//! Item ids of one query are interned into `0..n` in lexicographic order, so
//! comparing ids compares item_id strings.

use std::collections::HashMap;

/// Sorted, deduplicated item universe of one query.
#[derive(Debug, Clone, Default)]
pub(crate) struct Universe {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Universe {
    pub(crate) fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let mut names: Vec<String> = names.into_iter().map(str::to_string).collect();
        names.sort_unstable();
        names.dedup();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        Universe { names, index }
    }

    pub(crate) fn len(&self) -> usize {
        self.names.len()
    }

    pub(crate) fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub(crate) fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }
}

/// Zeroed per-item marker arrays reused across distance evaluations.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    mark_a: Vec<u32>,
    mark_b: Vec<u32>,
    buf: Vec<u32>,
    tmp: Vec<u32>,
}

impl Scratch {
    pub(crate) fn with_universe(n: usize) -> Self {
        let mut s = Scratch::default();
        s.ensure(n);
        s
    }

    pub(crate) fn ensure(&mut self, n: usize) {
        if self.mark_a.len() < n {
            self.mark_a.resize(n, 0);
            self.mark_b.resize(n, 0);
        }
    }
}

/// Penalty counts of the Kendall distance with neutral penalty 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct KendallCounts {
    /// Twice the total penalty, so half-penalties stay integral.
    pub doubled_penalty: u64,
    /// Size of the union of both lists.
    pub union: usize,
}

impl KendallCounts {
    pub(crate) fn pairs(&self) -> u64 {
        let n = self.union as u64;
        n * n.saturating_sub(1) / 2
    }

    pub(crate) fn normalized(&self) -> f64 {
        let pairs = self.pairs();
        if pairs == 0 {
            0.0
        } else {
            self.doubled_penalty as f64 / (2 * pairs) as f64
        }
    }
}

/// Kendall penalty between two strict top-k orders over interned ids.
///
/// Pairs present in both lists cost 1 when discordant. A pair where one list
/// holds both items and the other holds only one costs 1 when the first list
/// ranks the missing item higher. Items seen in only one list each, one per
/// list, cost 1. Two items that only one list holds cost 1/2.
pub(crate) fn kendall_counts(a: &[u32], b: &[u32], s: &mut Scratch) -> KendallCounts {
    for (r, &id) in a.iter().enumerate() {
        s.mark_a[id as usize] = r as u32 + 1;
    }
    for (r, &id) in b.iter().enumerate() {
        s.mark_b[id as usize] = r as u32 + 1;
    }

    let mut doubled = 0u64;
    // Ranks in b of the shared items, taken in a-order.
    s.buf.clear();
    let mut only_a_seen = 0u64;
    for &id in a {
        let rb = s.mark_b[id as usize];
        if rb == 0 {
            only_a_seen += 1;
        } else {
            s.buf.push(rb);
            doubled += 2 * only_a_seen;
        }
    }
    let common = s.buf.len();
    let mut only_b_seen = 0u64;
    for &id in b {
        if s.mark_a[id as usize] == 0 {
            only_b_seen += 1;
        } else {
            doubled += 2 * only_b_seen;
        }
    }
    let only_a = (a.len() - common) as u64;
    let only_b = (b.len() - common) as u64;
    doubled += 2 * count_inversions(&mut s.buf, &mut s.tmp);
    doubled += 2 * only_a * only_b;
    doubled += only_a * only_a.saturating_sub(1) / 2;
    doubled += only_b * only_b.saturating_sub(1) / 2;

    for &id in a {
        s.mark_a[id as usize] = 0;
    }
    for &id in b {
        s.mark_b[id as usize] = 0;
    }
    KendallCounts {
        doubled_penalty: doubled,
        union: a.len() + b.len() - common,
    }
}

fn count_inversions(v: &mut [u32], tmp: &mut Vec<u32>) -> u64 {
    if v.len() < 2 {
        return 0;
    }
    if v.len() <= 16 {
        let mut inv = 0u64;
        for i in 1..v.len() {
            let x = v[i];
            let mut j = i;
            while j > 0 && v[j - 1] > x {
                v[j] = v[j - 1];
                j -= 1;
                inv += 1;
            }
            v[j] = x;
        }
        return inv;
    }
    let mid = v.len() / 2;
    let mut inv = count_inversions(&mut v[..mid], tmp) + count_inversions(&mut v[mid..], tmp);
    tmp.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < v.len() {
        if v[i] <= v[j] {
            tmp.push(v[i]);
            i += 1;
        } else {
            tmp.push(v[j]);
            inv += (mid - i) as u64;
            j += 1;
        }
    }
    tmp.extend_from_slice(&v[i..mid]);
    tmp.extend_from_slice(&v[j..]);
    v.copy_from_slice(tmp);
    inv
}

/// Extrapolated rank-biased overlap for lists of possibly different lengths.
pub(crate) fn rbo_ext(a: &[u32], b: &[u32], p: f64, s: &mut Scratch) -> f64 {
    if a == b {
        return 1.0;
    }
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let (sl, ll) = (short.len(), long.len());
    if sl == 0 {
        return if ll == 0 { 1.0 } else { 0.0 };
    }
    let mut overlap = 0usize;
    let mut overlap_at_s = 0usize;
    let mut sum = 0.0;
    let mut weight = 1.0;
    for d in 1..=ll {
        weight *= p;
        let id = long[d - 1] as usize;
        if s.mark_a[id] != 0 {
            overlap += 1;
        }
        s.mark_b[id] = 1;
        if d <= sl {
            let id = short[d - 1] as usize;
            if s.mark_b[id] != 0 {
                overlap += 1;
            }
            s.mark_a[id] = 1;
        }
        if d == sl {
            overlap_at_s = overlap;
        }
        let x_d = overlap as f64;
        sum += x_d / d as f64 * weight;
        if d > sl {
            let xs = overlap_at_s as f64;
            sum += xs * (d - sl) as f64 / (sl * d) as f64 * weight;
        }
    }
    for &id in short {
        s.mark_a[id as usize] = 0;
    }
    for &id in long {
        s.mark_b[id as usize] = 0;
    }
    let xl = overlap as f64;
    let xs = overlap_at_s as f64;
    let tail = ((xl - xs) / ll as f64 + xs / sl as f64) * weight;
    let rbo = (1.0 - p) / p * sum + tail;
    rbo.clamp(0.0, 1.0)
}

/// Overlap of the top-`k` prefixes, normalized by the larger usable depth.
pub(crate) fn topk_overlap(a: &[u32], b: &[u32], k: usize, s: &mut Scratch) -> f64 {
    let ka = k.min(a.len());
    let kb = k.min(b.len());
    let denom = ka.max(kb);
    if denom == 0 {
        return 1.0;
    }
    for &id in &b[..kb] {
        s.mark_b[id as usize] = 1;
    }
    let common = a[..ka]
        .iter()
        .filter(|&&id| s.mark_b[id as usize] != 0)
        .count();
    for &id in &b[..kb] {
        s.mark_b[id as usize] = 0;
    }
    common as f64 / denom as f64
}
