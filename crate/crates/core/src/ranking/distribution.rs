use serde::{Deserialize, Serialize};

use super::{AttributeKind, AttributeSchema, RankedList, ResultItem, UNANNOTATED};
use crate::error::{BiasError, Result};

/// How the top-k items are weighted when estimating `Pr(u, a_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Each of the top-k items weighs `1/k`.
    #[default]
    Uniform,
    /// Item at rank r weighs proportionally to `1/log2(r+1)`.
    RankDiscounted,
}

/// Normalized weights for the first `n` ranks.
pub(crate) fn rank_weights(n: usize, weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::Uniform => vec![1.0 / n as f64; n],
        Weighting::RankDiscounted => {
            let raw: Vec<f64> = (1..=n).map(|r| 1.0 / ((r + 1) as f64).log2()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        }
    }
}

/// Probability vector over the values of one attribute, with the
/// unannotated mass kept separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDistribution {
    values: Vec<String>,
    probabilities: Vec<f64>,
    unannotated: f64,
}

impl AttributeDistribution {
    pub(crate) fn new(values: Vec<String>, probabilities: Vec<f64>, unannotated: f64) -> Self {
        debug_assert_eq!(values.len(), probabilities.len());
        AttributeDistribution {
            values,
            probabilities,
            unannotated,
        }
    }

    /// Builds a distribution from a vector laid out as values then unannotated.
    pub(crate) fn from_dense(values: Vec<String>, dense: &[f64]) -> Self {
        let m = values.len();
        AttributeDistribution::new(values, dense[..m].to_vec(), dense[m])
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn unannotated(&self) -> f64 {
        self.unannotated
    }

    pub fn get(&self, value: &str) -> Option<f64> {
        if value == UNANNOTATED {
            return Some(self.unannotated);
        }
        self.values
            .iter()
            .position(|v| v == value)
            .map(|i| self.probabilities[i])
    }

    pub fn annotated_mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Probabilities rescaled to sum to one over annotated values.
    pub fn renormalized(&self) -> Result<Vec<f64>> {
        let mass = self.annotated_mass();
        if mass <= 0.0 {
            return Err(BiasError::MeasureUndefined(
                "distribution has no annotated mass".into(),
            ));
        }
        Ok(self.probabilities.iter().map(|p| p / mass).collect())
    }
}

/// Dense annotation vector of an item for `schema`: one slot per value, then
/// the unannotated slot. Items without the attribute are fully unannotated.
pub(crate) fn annotation_vector(item: &ResultItem, schema: &AttributeSchema) -> Result<Vec<f64>> {
    let m = schema.values().len();
    let mut out = vec![0.0; m + 1];
    match item.annotation(schema.name()) {
        None => out[m] = 1.0,
        Some(weights) => {
            for (value, w) in weights {
                let slot = if value == UNANNOTATED {
                    m
                } else {
                    schema.index_of(value).ok_or_else(|| {
                        BiasError::Schema(format!(
                            "item {:?} is annotated with {value:?}, which is not a value of {:?}",
                            item.item_id(),
                            schema.name()
                        ))
                    })?
                };
                out[slot] += w;
            }
        }
    }
    Ok(out)
}

/// Weighted average of dense annotation vectors over the top `min(k, n)`
/// ranks. `vectors` yields one `m+1` slice per rank, best first.
pub(crate) fn dense_distribution<'a>(
    vectors: impl ExactSizeIterator<Item = &'a [f64]>,
    m: usize,
    k: usize,
    weighting: Weighting,
) -> Vec<f64> {
    let n = vectors.len().min(k);
    let mut out = vec![0.0; m + 1];
    if n == 0 {
        out[m] = 1.0;
        return out;
    }
    let weights = rank_weights(n, weighting);
    for (v, w) in vectors.take(n).zip(weights) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    out
}

pub(crate) fn require_differentiating(schema: &AttributeSchema) -> Result<()> {
    if schema.kind() != AttributeKind::Differentiating {
        return Err(BiasError::Schema(format!(
            "{:?} is not a differentiating attribute",
            schema.name()
        )));
    }
    Ok(())
}

/// Fraction of the top-k results about each value of `attr`.
///
/// An empty list puts all mass on the unannotated bucket.
pub fn attribute_distribution(
    list: &RankedList,
    attr: &AttributeSchema,
    k: usize,
    weighting: Weighting,
) -> Result<AttributeDistribution> {
    if k == 0 {
        return Err(BiasError::Parameter(
            "top-k depth must be at least 1".into(),
        ));
    }
    require_differentiating(attr)?;
    let m = attr.values().len();
    let vectors = list
        .items()
        .iter()
        .take(k)
        .map(|item| annotation_vector(item, attr))
        .collect::<Result<Vec<_>>>()?;
    let dense = dense_distribution(vectors.iter().map(Vec::as_slice), m, k, weighting);
    Ok(AttributeDistribution::from_dense(
        attr.values().to_vec(),
        &dense,
    ))
}

/// Max-norm distance between two distributions over the same values, after
/// dropping the unannotated bucket and renormalizing each side.
pub fn distribution_distance(p: &AttributeDistribution, q: &AttributeDistribution) -> Result<f64> {
    if p.values != q.values {
        return Err(BiasError::Schema(format!(
            "distributions over different value sets: {:?} vs {:?}",
            p.values, q.values
        )));
    }
    let pn = p.renormalized()?;
    let qn = q.renormalized()?;
    Ok(max_abs_diff(&pn, &qn))
}

pub(crate) fn max_abs_diff(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// [`distribution_distance`] on dense `m+1` vectors; `None` when either side
/// has no annotated mass.
pub(crate) fn dense_distance(p: &[f64], q: &[f64]) -> Option<f64> {
    let m = p.len() - 1;
    let pm: f64 = p[..m].iter().sum();
    let qm: f64 = q[..m].iter().sum();
    if pm <= 0.0 || qm <= 0.0 {
        return None;
    }
    Some(
        p[..m]
            .iter()
            .zip(&q[..m])
            .map(|(a, b)| (a / pm - b / qm).abs())
            .fold(0.0, f64::max),
    )
}
