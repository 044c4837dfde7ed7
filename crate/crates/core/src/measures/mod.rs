//! Individual, group, content, combined and comparative bias measures.
//!
//! Every measure evaluates per query, then folds the per-query magnitudes
//! with the configured [`QueryAggregation`]. Class-level subjects are
//! represented by a list aggregated from the lists their members received.

mod comparative;
mod content;
mod group;
mod individual;
pub(crate) mod prepared;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::aggregation::Aggregator;
use crate::error::{BiasError, Result};
use crate::ranking::{
    distribution::require_differentiating, AttrValue, AttributeSchema, GroundTruth,
    ListDistanceKind, RankedList, RelevantAttribute, UserProfile, Weighting,
};

pub use comparative::{comparative_bias, ComparativeVerdict};
pub(crate) use content::evaluate_echo;
pub use content::{combined_bias, content_bias, echo_chamber_test, EchoChamberResult};
pub use group::{group_user_bias, probabilistic_group_bias};
pub use individual::individual_user_bias;

/// Default ε for measures over attribute distributions.
pub const DEFAULT_EPSILON_DISTRIBUTION: f64 = 0.05;
/// Default ε for measures over list-space distances.
pub const DEFAULT_EPSILON_LIST: f64 = 0.1;
/// Violations of the individual-bias inequality below this are float noise.
pub const VIOLATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryAggregation {
    #[default]
    Mean,
    Max,
}

impl QueryAggregation {
    pub fn apply(self, values: &[f64]) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        match self {
            QueryAggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            QueryAggregation::Max => values.iter().copied().fold(0.0, f64::max),
        }
    }
}

fn default_k() -> usize {
    10
}
fn default_rbo_persistence() -> f64 {
    0.9
}
fn default_pair_radius() -> f64 {
    1.0
}
fn default_cluster_radius() -> f64 {
    0.05
}

/// Tunables shared by all measures. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    /// Threshold ε; `None` picks [`DEFAULT_EPSILON_DISTRIBUTION`] or
    /// [`DEFAULT_EPSILON_LIST`] depending on the measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Top-k depth for attribute distributions and representative lists.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub dr_kind: ListDistanceKind,
    #[serde(default = "default_rbo_persistence")]
    pub rbo_persistence: f64,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub aggregator: Aggregator,
    #[serde(default)]
    pub query_aggregation: QueryAggregation,
    /// Attributes the user distance compares.
    #[serde(default)]
    pub relevant_attributes: Vec<RelevantAttribute>,
    /// Individual bias only compares pairs with user distance at most this.
    #[serde(default = "default_pair_radius")]
    pub pair_radius: f64,
    /// List variants within this distance are merged by
    /// [`probabilistic_group_bias`].
    #[serde(default = "default_cluster_radius")]
    pub cluster_radius: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            epsilon: None,
            k: default_k(),
            dr_kind: ListDistanceKind::default(),
            rbo_persistence: default_rbo_persistence(),
            weighting: Weighting::default(),
            aggregator: Aggregator::default(),
            query_aggregation: QueryAggregation::default(),
            relevant_attributes: Vec::new(),
            pair_radius: default_pair_radius(),
            cluster_radius: default_cluster_radius(),
        }
    }
}

impl MeasureConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(BiasError::Parameter(format!(
                    "epsilon must be >= 0, got {e}"
                )));
            }
        }
        if self.k == 0 {
            return Err(BiasError::Parameter("k must be at least 1".into()));
        }
        crate::ranking::distance::check_persistence(self.rbo_persistence)?;
        if self.pair_radius.is_nan() || self.pair_radius < 0.0 {
            return Err(BiasError::Parameter("pair_radius must be >= 0".into()));
        }
        if !(self.cluster_radius >= 0.0 && self.cluster_radius < 1.0) {
            return Err(BiasError::Parameter(
                "cluster_radius must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn epsilon_distribution(&self) -> f64 {
        self.epsilon.unwrap_or(DEFAULT_EPSILON_DISTRIBUTION)
    }

    /// ε for a measure over the configured list distance.
    pub fn epsilon_list(&self) -> f64 {
        match self.epsilon {
            Some(e) => e,
            None if self.dr_kind.is_distribution_based() => DEFAULT_EPSILON_DISTRIBUTION,
            None => DEFAULT_EPSILON_LIST,
        }
    }
}

/// Designates class P: users whose protected attribute equals `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectedClass {
    pub attribute: String,
    pub value: AttrValue,
}

impl ProtectedClass {
    pub fn new(attribute: impl Into<String>, value: impl Into<AttrValue>) -> Self {
        ProtectedClass {
            attribute: attribute.into(),
            value: value.into(),
        }
    }

    pub fn contains(&self, user: &UserProfile) -> Result<bool> {
        let v = user.protected().get(&self.attribute).ok_or_else(|| {
            BiasError::Profile(format!(
                "user {:?} has no protected attribute {:?}",
                user.user_id(),
                self.attribute
            ))
        })?;
        Ok(*v == self.value)
    }
}

/// Everything a bias audit reads.
#[derive(Debug, Clone)]
pub struct AuditInput {
    profiles: Vec<UserProfile>,
    lists: BTreeMap<(String, String), RankedList>,
    protected: ProtectedClass,
    attribute: AttributeSchema,
    ground_truth: Option<GroundTruth>,
    query_ground_truth: BTreeMap<String, GroundTruth>,
    config: MeasureConfig,
}

impl AuditInput {
    pub fn new(
        profiles: Vec<UserProfile>,
        lists: impl IntoIterator<Item = RankedList>,
        protected: ProtectedClass,
        attribute: AttributeSchema,
        config: MeasureConfig,
    ) -> Result<Self> {
        config.validate()?;
        require_differentiating(&attribute)?;
        let mut ids = BTreeSet::new();
        for p in &profiles {
            if !ids.insert(p.user_id().to_string()) {
                return Err(BiasError::Input(format!(
                    "duplicate profile {:?}",
                    p.user_id()
                )));
            }
            protected.contains(p)?;
        }
        let mut map = BTreeMap::new();
        for list in lists {
            if !ids.contains(list.user_id()) {
                return Err(BiasError::Input(format!(
                    "list for query {:?} belongs to unknown user {:?}",
                    list.query_id(),
                    list.user_id()
                )));
            }
            let key = (list.user_id().to_string(), list.query_id().to_string());
            if map.contains_key(&key) {
                return Err(BiasError::Input(format!(
                    "two lists for user {:?}, query {:?}",
                    key.0, key.1
                )));
            }
            map.insert(key, list);
        }
        Ok(AuditInput {
            profiles,
            lists: map,
            protected,
            attribute,
            ground_truth: None,
            query_ground_truth: BTreeMap::new(),
            config,
        })
    }

    pub fn with_ground_truth(mut self, gt: GroundTruth) -> Result<Self> {
        gt.to_distribution(&self.attribute)?;
        self.ground_truth = Some(gt);
        Ok(self)
    }

    /// Ground truth used for one query instead of the default.
    pub fn with_query_ground_truth(
        mut self,
        query_id: impl Into<String>,
        gt: GroundTruth,
    ) -> Result<Self> {
        gt.to_distribution(&self.attribute)?;
        self.query_ground_truth.insert(query_id.into(), gt);
        Ok(self)
    }

    pub fn with_config(mut self, config: MeasureConfig) -> Result<Self> {
        config.validate()?;
        self.config = config;
        Ok(self)
    }

    pub fn profiles(&self) -> &[UserProfile] {
        &self.profiles
    }

    pub fn lists(&self) -> &BTreeMap<(String, String), RankedList> {
        &self.lists
    }

    pub fn list(&self, user_id: &str, query_id: &str) -> Option<&RankedList> {
        self.lists.get(&(user_id.to_string(), query_id.to_string()))
    }

    pub fn protected(&self) -> &ProtectedClass {
        &self.protected
    }

    pub fn attribute(&self) -> &AttributeSchema {
        &self.attribute
    }

    pub fn config(&self) -> &MeasureConfig {
        &self.config
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    pub fn ground_truth_for(&self, query_id: &str) -> Option<&GroundTruth> {
        self.query_ground_truth
            .get(query_id)
            .or(self.ground_truth.as_ref())
    }

    pub fn has_ground_truth(&self) -> bool {
        self.ground_truth.is_some() || !self.query_ground_truth.is_empty()
    }

    /// Query ids of the battery, sorted.
    pub fn queries(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.lists.keys().map(|(_, q)| q.as_str()).collect();
        set.into_iter().collect()
    }

    /// Number of users in class P and in its complement.
    pub fn class_sizes(&self) -> (usize, usize) {
        let p = self
            .profiles
            .iter()
            .filter(|u| self.protected.contains(u).unwrap_or(false))
            .count();
        (p, self.profiles.len() - p)
    }
}

/// Outcome of one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVerdict {
    pub measure_name: String,
    pub magnitude: f64,
    pub threshold: f64,
    /// Exactly `magnitude > threshold`.
    pub biased: bool,
    pub per_query: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

impl BiasVerdict {
    pub(crate) fn from_per_query(
        name: &str,
        per_query: Vec<(String, f64)>,
        aggregation: QueryAggregation,
        threshold: f64,
    ) -> Self {
        let values: Vec<f64> = per_query.iter().map(|(_, v)| *v).collect();
        let magnitude = aggregation.apply(&values);
        BiasVerdict {
            measure_name: name.to_string(),
            magnitude,
            threshold,
            biased: magnitude > threshold,
            per_query: per_query.into_iter().collect(),
            diagnostics: BTreeMap::new(),
        }
    }

    pub(crate) fn diag(mut self, key: &str, value: impl Serialize) -> Self {
        self.diagnostics.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSide {
    Protected,
    Unprotected,
}

impl ClassSide {
    pub fn label(self) -> &'static str {
        match self {
            ClassSide::Protected => "P",
            ClassSide::Unprotected => "P-bar",
        }
    }
}

/// What a content or combined measure looks at.
#[derive(Debug, Clone, PartialEq)]
pub enum Subject {
    /// The lists one user received.
    User(String),
    /// The representative list of a class.
    Class(ClassSide),
    /// An explicit list, evaluated for its own query only.
    List(RankedList),
}

/// Measures addressable by the significance procedures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    IndividualUserBias,
    GroupUserBias,
    ProbabilisticGroupBias,
    EchoChamber,
    CombinedClassBias,
    ContentBiasProtected,
    ContentBiasUnprotected,
}

impl Measure {
    pub const ALL: [Measure; 7] = [
        Measure::IndividualUserBias,
        Measure::GroupUserBias,
        Measure::ProbabilisticGroupBias,
        Measure::CombinedClassBias,
        Measure::ContentBiasProtected,
        Measure::ContentBiasUnprotected,
        Measure::EchoChamber,
    ];

    /// Measures comparing class P with its complement; only these admit a
    /// label-permutation null.
    pub fn is_group(self) -> bool {
        matches!(
            self,
            Measure::GroupUserBias
                | Measure::ProbabilisticGroupBias
                | Measure::EchoChamber
                | Measure::CombinedClassBias
        )
    }

    pub fn needs_ground_truth(self) -> bool {
        matches!(
            self,
            Measure::EchoChamber | Measure::ContentBiasProtected | Measure::ContentBiasUnprotected
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::IndividualUserBias => "individual_user_bias",
            Measure::GroupUserBias => "group_user_bias",
            Measure::ProbabilisticGroupBias => "probabilistic_group_bias",
            Measure::EchoChamber => "echo_chamber",
            Measure::CombinedClassBias => "combined_class_bias",
            Measure::ContentBiasProtected => "content_bias_protected",
            Measure::ContentBiasUnprotected => "content_bias_unprotected",
        }
    }
}

/// Runs one measure on the full input.
pub fn evaluate(input: &AuditInput, measure: Measure) -> Result<BiasVerdict> {
    let prep = prepared::Prepared::new(input)?;
    evaluate_on(&prep, &prep.full_sample(), measure, true)
}

pub(crate) fn evaluate_on(
    prep: &prepared::Prepared<'_>,
    sample: &prepared::Sample,
    measure: Measure,
    detailed: bool,
) -> Result<BiasVerdict> {
    let p = Subject::Class(ClassSide::Protected);
    let pbar = Subject::Class(ClassSide::Unprotected);
    match measure {
        Measure::IndividualUserBias => individual::evaluate_individual(prep, sample, detailed),
        Measure::GroupUserBias => group::evaluate_group(prep, sample, detailed),
        Measure::ProbabilisticGroupBias => group::evaluate_probabilistic(prep, sample, detailed),
        Measure::EchoChamber => content::evaluate_echo(prep, sample).map(|r| r.verdict),
        Measure::CombinedClassBias => content::evaluate_combined(prep, sample, &p, &pbar),
        Measure::ContentBiasProtected => content::evaluate_content(prep, sample, &p),
        Measure::ContentBiasUnprotected => content::evaluate_content(prep, sample, &pbar),
    }
}
