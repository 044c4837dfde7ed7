//! Interned view of an [`AuditInput`] used by every measure.
//!
//! Measures are evaluated on a [`Sample`]: a sequence of user indices with a
//! class label each. The audit itself uses every user with their real label;
//! permutation tests relabel, the bootstrap resamples.

use std::sync::OnceLock;

use super::{AuditInput, ClassSide};
use crate::aggregation::order_with;
use crate::error::{BiasError, Result};
use crate::ranking::distribution::{annotation_vector, dense_distance, dense_distribution};
use crate::ranking::indexed::{self, Scratch, Universe};
use crate::ranking::{ListDistanceKind, RankedList, Weighting};

#[derive(Debug, Clone)]
pub(crate) struct IndexedList {
    pub ids: Vec<u32>,
    /// Dense annotation vectors, `m + 1` per rank.
    pub ann: Vec<f64>,
    /// Top-k attribute distribution, `m + 1` entries.
    pub dist: Vec<f64>,
}

/// The parts of a list the distances read.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ListView<'a> {
    pub ids: &'a [u32],
    pub dist: &'a [f64],
}

impl IndexedList {
    pub fn view(&self) -> ListView<'_> {
        ListView {
            ids: &self.ids,
            dist: &self.dist,
        }
    }
}

/// A class representative: ids plus per-rank averaged annotations.
#[derive(Debug, Clone)]
pub(crate) struct Representative {
    pub ids: Vec<u32>,
    pub dist: Vec<f64>,
}

impl Representative {
    pub fn view(&self) -> ListView<'_> {
        ListView {
            ids: &self.ids,
            dist: &self.dist,
        }
    }
}

#[derive(Debug)]
pub(crate) struct PreparedQuery {
    pub index: usize,
    pub query_id: String,
    pub universe: Universe,
    /// Indexed by user index; `None` when the user has no list for the query.
    pub lists: Vec<Option<IndexedList>>,
}

/// The list-space distance selected by the configuration.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Metric {
    pub kind: ListDistanceKind,
    pub persistence: f64,
    pub k: usize,
}

impl Metric {
    pub fn distance(&self, a: ListView<'_>, b: ListView<'_>, s: &mut Scratch) -> Result<f64> {
        Ok(match self.kind {
            ListDistanceKind::Kendall => indexed::kendall_counts(a.ids, b.ids, s).normalized(),
            ListDistanceKind::Rbo => 1.0 - indexed::rbo_ext(a.ids, b.ids, self.persistence, s),
            ListDistanceKind::TopK => 1.0 - indexed::topk_overlap(a.ids, b.ids, self.k, s),
            ListDistanceKind::Attribute => dense_distance(a.dist, b.dist).ok_or_else(|| {
                BiasError::MeasureUndefined(
                    "attribute distance between lists without annotated items".into(),
                )
            })?,
        })
    }
}

type ClassPair = (Representative, Representative);

#[derive(Debug, Clone)]
pub(crate) struct Sample {
    pub members: Vec<usize>,
    pub in_p: Vec<bool>,
    /// Class representatives per query, computed on first use and shared by
    /// every measure evaluated on this sample.
    reps: Vec<OnceLock<Result<ClassPair>>>,
}

impl Sample {
    pub fn new(members: Vec<usize>, in_p: Vec<bool>, n_queries: usize) -> Self {
        Sample {
            members,
            in_p,
            reps: (0..n_queries).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn class(&self, side: ClassSide) -> impl Iterator<Item = usize> + '_ {
        let want = side == ClassSide::Protected;
        self.members
            .iter()
            .zip(&self.in_p)
            .filter(move |(_, &p)| p == want)
            .map(|(&u, _)| u)
    }

    pub fn class_size(&self, side: ClassSide) -> usize {
        let want = side == ClassSide::Protected;
        self.in_p.iter().filter(|&&p| p == want).count()
    }
}

/// Per-query clustering of list variants, independent of class labels.
#[derive(Debug, Clone)]
pub(crate) struct QueryClusters {
    /// Cluster of each user's list; `None` for users without a list.
    pub cluster_of: Vec<Option<u32>>,
    pub n_variants: usize,
    pub n_clusters: usize,
}

fn bitset(ids: &[u32], universe: usize) -> Vec<u64> {
    let mut bits = vec![0u64; universe.div_ceil(64)];
    for &id in ids {
        bits[id as usize / 64] |= 1 << (id % 64);
    }
    bits
}

/// Kendall distance counting only the pairs of items missing from one list,
/// which is exact for those pairs and never exceeds the full distance.
fn kendall_lower_bound(len_a: usize, len_b: usize, overlap: usize) -> f64 {
    let (xa, xb) = ((len_a - overlap) as u64, (len_b - overlap) as u64);
    let n = (len_a + len_b - overlap) as u64;
    let pairs = n * n.saturating_sub(1) / 2;
    if pairs == 0 {
        return 0.0;
    }
    let doubled = 2 * xa * xb + xa * xa.saturating_sub(1) / 2 + xb * xb.saturating_sub(1) / 2;
    doubled as f64 / (2 * pairs) as f64
}

#[derive(Debug)]
pub(crate) struct Prepared<'a> {
    pub input: &'a AuditInput,
    pub in_p: Vec<bool>,
    pub queries: Vec<PreparedQuery>,
    pub m: usize,
    clusters: OnceLock<std::result::Result<Vec<QueryClusters>, BiasError>>,
}

impl<'a> Prepared<'a> {
    pub fn new(input: &'a AuditInput) -> Result<Self> {
        let cfg = input.config();
        let schema = input.attribute();
        let m = schema.values().len();
        let users = input.profiles();
        let in_p = users
            .iter()
            .map(|u| input.protected().contains(u))
            .collect::<Result<Vec<_>>>()?;
        let user_index: std::collections::HashMap<&str, usize> = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.user_id(), i))
            .collect();

        let mut queries = Vec::new();
        for query_id in input.queries() {
            let query_lists: Vec<&RankedList> = input
                .lists()
                .values()
                .filter(|l| l.query_id() == query_id)
                .collect();
            let universe = Universe::from_names(query_lists.iter().flat_map(|l| l.item_ids()));
            let mut lists = vec![None; users.len()];
            for list in query_lists {
                let ids: Vec<u32> = list
                    .item_ids()
                    .map(|n| universe.id(n).expect("interned"))
                    .collect();
                let mut ann = Vec::with_capacity(ids.len() * (m + 1));
                for item in list.items() {
                    ann.extend(annotation_vector(item, schema)?);
                }
                let dist = dense_distribution(ann.chunks_exact(m + 1), m, cfg.k, cfg.weighting);
                lists[user_index[list.user_id()]] = Some(IndexedList { ids, ann, dist });
            }
            queries.push(PreparedQuery {
                index: queries.len(),
                query_id: query_id.to_string(),
                universe,
                lists,
            });
        }
        Ok(Prepared {
            input,
            in_p,
            queries,
            m,
            clusters: OnceLock::new(),
        })
    }

    pub fn n_users(&self) -> usize {
        self.in_p.len()
    }

    pub fn full_sample(&self) -> Sample {
        self.sample((0..self.n_users()).collect(), self.in_p.clone())
    }

    pub fn sample(&self, members: Vec<usize>, in_p: Vec<bool>) -> Sample {
        Sample::new(members, in_p, self.queries.len())
    }

    pub fn metric(&self) -> Metric {
        let cfg = self.input.config();
        Metric {
            kind: cfg.dr_kind,
            persistence: cfg.rbo_persistence,
            k: cfg.k,
        }
    }

    pub fn user_id(&self, u: usize) -> &str {
        self.input.profiles()[u].user_id()
    }

    pub fn list<'q>(&self, q: &'q PreparedQuery, u: usize) -> Result<&'q IndexedList> {
        q.lists[u].as_ref().ok_or_else(|| {
            BiasError::Input(format!(
                "user {:?} has no list for query {:?}",
                self.user_id(u),
                q.query_id
            ))
        })
    }

    /// Representative depth for a query: the deepest list in the sample,
    /// capped by the configured k.
    pub fn representative_depth(&self, q: &PreparedQuery, sample: &Sample) -> usize {
        let deepest = sample
            .members
            .iter()
            .filter_map(|&u| q.lists[u].as_ref().map(|l| l.ids.len()))
            .max()
            .unwrap_or(0);
        deepest.min(self.input.config().k).max(1)
    }

    /// Aggregated list of one class for one query, with annotations averaged
    /// over every occurrence of each representative item.
    pub fn representative(
        &self,
        q: &PreparedQuery,
        members: impl Iterator<Item = usize>,
        depth: usize,
    ) -> Result<Representative> {
        let cfg = self.input.config();
        let lists: Vec<&IndexedList> = members.map(|u| self.list(q, u)).collect::<Result<_>>()?;
        if lists.is_empty() {
            return Err(BiasError::Input(format!(
                "empty user class for query {:?}",
                q.query_id
            )));
        }
        let id_lists: Vec<&[u32]> = lists.iter().map(|l| l.ids.as_slice()).collect();
        let ids = order_with(cfg.aggregator, &id_lists, q.universe.len(), depth)?;
        let dist = self.averaged_distribution(q, &lists, &ids, cfg.k, cfg.weighting);
        Ok(Representative { ids, dist })
    }

    fn averaged_distribution(
        &self,
        q: &PreparedQuery,
        lists: &[&IndexedList],
        ids: &[u32],
        k: usize,
        weighting: Weighting,
    ) -> Vec<f64> {
        let w = self.m + 1;
        let mut slot = vec![u32::MAX; q.universe.len()];
        for (r, &id) in ids.iter().enumerate() {
            slot[id as usize] = r as u32;
        }
        let mut sums = vec![0.0; ids.len() * w];
        let mut counts = vec![0u32; ids.len()];
        for list in lists {
            for (pos, &id) in list.ids.iter().enumerate() {
                let r = slot[id as usize];
                if r != u32::MAX {
                    let r = r as usize;
                    counts[r] += 1;
                    for (acc, x) in sums[r * w..(r + 1) * w]
                        .iter_mut()
                        .zip(&list.ann[pos * w..(pos + 1) * w])
                    {
                        *acc += x;
                    }
                }
            }
        }
        for (r, &c) in counts.iter().enumerate() {
            for x in &mut sums[r * w..(r + 1) * w] {
                *x /= f64::from(c);
            }
        }
        dense_distribution(sums.chunks_exact(w), self.m, k, weighting)
    }

    pub fn class_representatives<'s>(
        &self,
        q: &PreparedQuery,
        sample: &'s Sample,
    ) -> Result<&'s ClassPair> {
        sample.reps[q.index]
            .get_or_init(|| {
                let depth = self.representative_depth(q, sample);
                let p = self.representative(q, sample.class(ClassSide::Protected), depth)?;
                let pbar = self.representative(q, sample.class(ClassSide::Unprotected), depth)?;
                Ok((p, pbar))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn clusters(&self) -> Result<&[QueryClusters]> {
        self.clusters
            .get_or_init(|| self.compute_clusters())
            .as_deref()
            .map_err(Clone::clone)
    }

    fn compute_clusters(&self) -> Result<Vec<QueryClusters>> {
        let metric = self.metric();
        let radius = self.input.config().cluster_radius;
        let mut out = Vec::with_capacity(self.queries.len());
        let mut scratch = Scratch::default();
        for q in &self.queries {
            scratch.ensure(q.universe.len());
            // Distinct variants, in lexicographic order of their id sequences;
            // each keeps its first holder's list as exemplar.
            let mut variants: Vec<(&[u32], usize)> = Vec::new();
            for (u, l) in q.lists.iter().enumerate() {
                if let Some(l) = l {
                    variants.push((&l.ids, u));
                }
            }
            variants.sort();
            variants.dedup_by(|a, b| a.0 == b.0);
            let bits: Vec<Vec<u64>> = if metric.kind == ListDistanceKind::Kendall {
                variants
                    .iter()
                    .map(|(ids, _)| bitset(ids, q.universe.len()))
                    .collect()
            } else {
                Vec::new()
            };
            // Leaders are indices into `variants`.
            let mut leaders: Vec<usize> = Vec::new();
            let mut variant_cluster = Vec::with_capacity(variants.len());
            for (vi, &(ids, holder)) in variants.iter().enumerate() {
                let view = q.lists[holder].as_ref().expect("holder has a list").view();
                let mut found = None;
                for (c, &leader) in leaders.iter().enumerate() {
                    let (lids, lholder) = variants[leader];
                    if !bits.is_empty() {
                        let overlap = bits[vi]
                            .iter()
                            .zip(&bits[leader])
                            .map(|(x, y)| (x & y).count_ones() as usize)
                            .sum();
                        if kendall_lower_bound(ids.len(), lids.len(), overlap) > radius {
                            continue;
                        }
                    }
                    let lv = q.lists[lholder].as_ref().expect("leader has a list").view();
                    if metric.distance(view, lv, &mut scratch)? <= radius {
                        found = Some(c);
                        break;
                    }
                }
                let c = match found {
                    Some(c) => c,
                    None => {
                        leaders.push(vi);
                        leaders.len() - 1
                    }
                };
                variant_cluster.push(c as u32);
            }
            let cluster_of = q
                .lists
                .iter()
                .map(|l| {
                    l.as_ref().map(|l| {
                        let i = variants
                            .binary_search_by(|(ids, _)| (*ids).cmp(l.ids.as_slice()))
                            .expect("variant indexed");
                        variant_cluster[i]
                    })
                })
                .collect();
            out.push(QueryClusters {
                cluster_of,
                n_variants: variants.len(),
                n_clusters: leaders.len(),
            });
        }
        Ok(out)
    }
}
