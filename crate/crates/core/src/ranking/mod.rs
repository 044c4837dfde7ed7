//! Result items, ranked lists, user profiles and attribute declarations,
//! plus the list-space and distribution-space distances defined over them.

pub(crate) mod distance;
pub(crate) mod distribution;
pub(crate) mod indexed;
mod user;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{BiasError, Result};

pub use distance::{
    kendall_detail, kendall_distance, rbo_distance, topk_overlap_distance, KendallDetail,
    ListDistanceKind,
};
pub use distribution::{
    attribute_distribution, distribution_distance, AttributeDistribution, Weighting,
};
pub use user::{user_distance, RelevantAttribute};

/// Reserved value name for annotation mass that is not attributed to any value.
pub const UNANNOTATED: &str = "unannotated";

/// Tolerance on annotation and probability vectors summing to one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Annotation weights of one item for one attribute, keyed by value name.
pub type WeightMap = BTreeMap<String, f64>;

pub(crate) fn check_weights(
    weights: &WeightMap,
    tolerance: f64,
) -> std::result::Result<(), String> {
    if weights.is_empty() {
        return Err("empty weight vector".into());
    }
    let mut total = 0.0;
    for (value, w) in weights {
        if !w.is_finite() || *w < 0.0 {
            return Err(format!(
                "weight for {value:?} is not a non-negative number: {w}"
            ));
        }
        total += w;
    }
    if (total - 1.0).abs() > tolerance {
        return Err(format!("weights sum to {total}, expected 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawItem")]
pub struct ResultItem {
    item_id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    annotations: BTreeMap<String, WeightMap>,
}

#[derive(Deserialize)]
struct RawItem {
    item_id: String,
    #[serde(default)]
    annotations: BTreeMap<String, WeightMap>,
}

impl TryFrom<RawItem> for ResultItem {
    type Error = BiasError;

    fn try_from(raw: RawItem) -> Result<Self> {
        ResultItem::new(raw.item_id, raw.annotations)
    }
}

impl ResultItem {
    pub fn new(
        item_id: impl Into<String>,
        annotations: BTreeMap<String, WeightMap>,
    ) -> Result<Self> {
        let item_id = item_id.into();
        if item_id.is_empty() {
            return Err(BiasError::Input("empty item_id".into()));
        }
        for (attr, weights) in &annotations {
            check_weights(weights, SUM_TOLERANCE).map_err(|e| {
                BiasError::Input(format!("item {item_id:?}, attribute {attr:?}: {e}"))
            })?;
        }
        Ok(ResultItem {
            item_id,
            annotations,
        })
    }

    /// An item with no annotations at all.
    pub fn bare(item_id: impl Into<String>) -> Result<Self> {
        ResultItem::new(item_id, BTreeMap::new())
    }

    /// An item annotated entirely with one value of one attribute.
    pub fn with_value(item_id: impl Into<String>, attr: &str, value: &str) -> Result<Self> {
        let mut weights = WeightMap::new();
        weights.insert(value.to_string(), 1.0);
        let mut annotations = BTreeMap::new();
        annotations.insert(attr.to_string(), weights);
        ResultItem::new(item_id, annotations)
    }

    pub fn item_id(&self) -> &str {
        &self.item_id
    }

    pub fn annotations(&self) -> &BTreeMap<String, WeightMap> {
        &self.annotations
    }

    pub fn annotation(&self, attr: &str) -> Option<&WeightMap> {
        self.annotations.get(attr)
    }
}

/// The result list one user received for one query. Position 0 is rank 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawList")]
pub struct RankedList {
    query_id: String,
    user_id: String,
    items: Vec<ResultItem>,
}

#[derive(Deserialize)]
struct RawList {
    query_id: String,
    user_id: String,
    items: Vec<ResultItem>,
}

impl TryFrom<RawList> for RankedList {
    type Error = BiasError;

    fn try_from(raw: RawList) -> Result<Self> {
        RankedList::new(raw.query_id, raw.user_id, raw.items)
    }
}

impl RankedList {
    pub fn new(
        query_id: impl Into<String>,
        user_id: impl Into<String>,
        items: Vec<ResultItem>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            if !seen.insert(item.item_id.as_str()) {
                return Err(BiasError::Input(format!(
                    "duplicate item_id {:?} in ranked list",
                    item.item_id
                )));
            }
        }
        Ok(RankedList {
            query_id: query_id.into(),
            user_id: user_id.into(),
            items,
        })
    }

    /// Convenience constructor for lists of unannotated items.
    pub fn from_ids<S: AsRef<str>>(
        query_id: impl Into<String>,
        user_id: impl Into<String>,
        ids: &[S],
    ) -> Result<Self> {
        let items = ids
            .iter()
            .map(|id| ResultItem::bare(id.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        RankedList::new(query_id, user_id, items)
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn items(&self) -> &[ResultItem] {
        &self.items
    }

    pub fn depth(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.item_id.as_str())
    }

    /// The first `k` items as a new list.
    pub fn truncated(&self, k: usize) -> RankedList {
        RankedList {
            query_id: self.query_id.clone(),
            user_id: self.user_id.clone(),
            items: self.items.iter().take(k).cloned().collect(),
        }
    }

    pub fn with_owner(mut self, user_id: impl Into<String>) -> RankedList {
        self.user_id = user_id.into();
        self
    }
}

/// A user attribute value: numeric or categorical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Number(x) => write!(f, "{x}"),
            AttrValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<&str> for AttrValue {
    fn from(s: &str) -> Self {
        AttrValue::Text(s.to_string())
    }
}

impl From<f64> for AttrValue {
    fn from(x: f64) -> Self {
        AttrValue::Number(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct UserProfile {
    user_id: String,
    #[serde(default)]
    protected: BTreeMap<String, AttrValue>,
    #[serde(default)]
    other: BTreeMap<String, AttrValue>,
}

#[derive(Deserialize)]
struct RawProfile {
    user_id: String,
    #[serde(default)]
    protected: BTreeMap<String, AttrValue>,
    #[serde(default)]
    other: BTreeMap<String, AttrValue>,
}

impl TryFrom<RawProfile> for UserProfile {
    type Error = BiasError;

    fn try_from(raw: RawProfile) -> Result<Self> {
        UserProfile::new(raw.user_id, raw.protected, raw.other)
    }
}

impl UserProfile {
    pub fn new(
        user_id: impl Into<String>,
        protected: BTreeMap<String, AttrValue>,
        other: BTreeMap<String, AttrValue>,
    ) -> Result<Self> {
        let user_id = user_id.into();
        if user_id.is_empty() {
            return Err(BiasError::Profile("empty user_id".into()));
        }
        if let Some(name) = protected.keys().find(|k| other.contains_key(*k)) {
            return Err(BiasError::Profile(format!(
                "user {user_id:?}: attribute {name:?} is both protected and non-protected"
            )));
        }
        Ok(UserProfile {
            user_id,
            protected,
            other,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn protected(&self) -> &BTreeMap<String, AttrValue> {
        &self.protected
    }

    pub fn other(&self) -> &BTreeMap<String, AttrValue> {
        &self.other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    /// A user attribute that must not influence results.
    Protected,
    /// A content attribute over whose values content bias is measured.
    Differentiating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct AttributeSchema {
    name: String,
    values: Vec<String>,
    kind: AttributeKind,
}

#[derive(Deserialize)]
struct RawSchema {
    name: String,
    values: Vec<String>,
    kind: AttributeKind,
}

impl TryFrom<RawSchema> for AttributeSchema {
    type Error = BiasError;

    fn try_from(raw: RawSchema) -> Result<Self> {
        AttributeSchema::new(raw.name, raw.values, raw.kind)
    }
}

impl AttributeSchema {
    pub fn new(name: impl Into<String>, values: Vec<String>, kind: AttributeKind) -> Result<Self> {
        let name = name.into();
        if values.len() < 2 {
            return Err(BiasError::Schema(format!(
                "attribute {name:?} needs at least two values"
            )));
        }
        let mut seen = HashSet::new();
        for v in &values {
            if v == UNANNOTATED {
                return Err(BiasError::Schema(format!(
                    "attribute {name:?}: {UNANNOTATED:?} is a reserved value"
                )));
            }
            if !seen.insert(v.as_str()) {
                return Err(BiasError::Schema(format!(
                    "attribute {name:?}: duplicate value {v:?}"
                )));
            }
        }
        Ok(AttributeSchema { name, values, kind })
    }

    pub fn differentiating<S: AsRef<str>>(name: &str, values: &[S]) -> Result<Self> {
        AttributeSchema::new(
            name,
            values.iter().map(|v| v.as_ref().to_string()).collect(),
            AttributeKind::Differentiating,
        )
    }

    pub fn protected<S: AsRef<str>>(name: &str, values: &[S]) -> Result<Self> {
        AttributeSchema::new(
            name,
            values.iter().map(|v| v.as_ref().to_string()).collect(),
            AttributeKind::Protected,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn kind(&self) -> AttributeKind {
        self.kind
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

/// Reference distribution over the values of a differentiating attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGroundTruth")]
pub struct GroundTruth {
    attribute: String,
    probabilities: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
struct RawGroundTruth {
    attribute: String,
    probabilities: BTreeMap<String, f64>,
}

impl TryFrom<RawGroundTruth> for GroundTruth {
    type Error = BiasError;

    fn try_from(raw: RawGroundTruth) -> Result<Self> {
        GroundTruth::new(raw.attribute, raw.probabilities)
    }
}

impl GroundTruth {
    pub fn new(attribute: impl Into<String>, probabilities: BTreeMap<String, f64>) -> Result<Self> {
        let attribute = attribute.into();
        check_weights(&probabilities, SUM_TOLERANCE)
            .map_err(|e| BiasError::Schema(format!("ground truth for {attribute:?}: {e}")))?;
        Ok(GroundTruth {
            attribute,
            probabilities,
        })
    }

    /// Ground truth over `schema` with probabilities in schema value order.
    pub fn from_vector(schema: &AttributeSchema, probs: &[f64]) -> Result<Self> {
        if probs.len() != schema.values().len() {
            return Err(BiasError::Schema(format!(
                "ground truth for {:?} has {} entries, schema has {} values",
                schema.name(),
                probs.len(),
                schema.values().len()
            )));
        }
        let map = schema
            .values()
            .iter()
            .cloned()
            .zip(probs.iter().copied())
            .collect();
        GroundTruth::new(schema.name(), map)
    }

    /// Ground truth derived from an explicit ideal list, renormalized over
    /// annotated mass.
    pub fn from_ideal_list(
        list: &RankedList,
        schema: &AttributeSchema,
        k: usize,
        weighting: Weighting,
    ) -> Result<Self> {
        let dist = attribute_distribution(list, schema, k, weighting)?;
        let probs = dist.renormalized()?;
        GroundTruth::from_vector(schema, &probs)
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    pub fn probabilities(&self) -> &BTreeMap<String, f64> {
        &self.probabilities
    }

    /// The ground truth as a distribution in `schema` value order.
    pub fn to_distribution(&self, schema: &AttributeSchema) -> Result<AttributeDistribution> {
        if self.attribute != schema.name() {
            return Err(BiasError::Schema(format!(
                "ground truth is for {:?}, not {:?}",
                self.attribute,
                schema.name()
            )));
        }
        if self.probabilities.len() != schema.values().len()
            || schema
                .values()
                .iter()
                .any(|v| !self.probabilities.contains_key(v))
        {
            return Err(BiasError::Schema(format!(
                "ground truth values for {:?} do not match the schema",
                schema.name()
            )));
        }
        let probs = schema
            .values()
            .iter()
            .map(|v| self.probabilities[v])
            .collect();
        Ok(AttributeDistribution::new(
            schema.values().to_vec(),
            probs,
            0.0,
        ))
    }
}
