//! A synthetic information provider with controllable bias.
//!
//! Users come in matched pairs that differ only in the protected attribute.
//! For every query the provider keeps an item pool and two orderings of it:
//! the base template, used for the unprotected class, and the protected-class
//! template, which is the base with each disjoint adjacent pair `(0,1)`,
//! `(2,3)`, ... swapped with probability `ranking_divergence`. A served list
//! is `list_depth` pool items drawn without replacement, ordered by the
//! user's class template, each annotated with one value drawn from the
//! query's ground truth after the class's shift on the first value.
//!
//! Random streams are keyed by the scenario seed and:
//! - `("profile", pair)` for the attributes of a matched pair;
//! - `("template", query)` and `("divergence", query)` for the templates;
//! - `("serve", query, user)` for a served list, or with `pair_coupling`
//!   `("serve-coupled", query, other attributes as JSON)`, which hands
//!   matched partners the same draws.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BiasError, Result};
use crate::measures::{AuditInput, MeasureConfig, ProtectedClass};
use crate::ranking::{
    AttrValue, AttributeKind, AttributeSchema, GroundTruth, RankedList, RelevantAttribute,
    ResultItem, UserProfile,
};
use crate::rng::SimRng;

/// A non-protected user attribute and the range it is sampled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OtherAttribute {
    Categorical { name: String, values: Vec<String> },
    Numeric { name: String, min: f64, max: f64 },
}

impl OtherAttribute {
    pub fn name(&self) -> &str {
        match self {
            OtherAttribute::Categorical { name, .. } | OtherAttribute::Numeric { name, .. } => name,
        }
    }

    fn sample(&self, rng: &mut SimRng) -> AttrValue {
        match self {
            OtherAttribute::Categorical { values, .. } => {
                AttrValue::Text(values[rng.below(values.len() as u64) as usize].clone())
            }
            OtherAttribute::Numeric { min, max, .. } => {
                AttrValue::Number(min + rng.uniform() * (max - min))
            }
        }
    }

    /// The user-distance view of this attribute.
    pub fn relevant(&self) -> RelevantAttribute {
        match self {
            OtherAttribute::Categorical { name, .. } => {
                RelevantAttribute::categorical(name.clone())
            }
            OtherAttribute::Numeric { name, min, max } => {
                RelevantAttribute::numeric(name.clone(), (max - min).max(f64::MIN_POSITIVE))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub query_id: String,
    pub ground_truth: GroundTruth,
}

/// Signed shift on the first attribute value's probability, per class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentShift {
    #[serde(default)]
    pub protected: f64,
    #[serde(default)]
    pub unprotected: f64,
}

impl ContentShift {
    /// `+delta` for the protected class, `-delta` for the other.
    pub fn opposite(delta: f64) -> Self {
        ContentShift {
            protected: delta,
            unprotected: -delta,
        }
    }
}

fn default_protected() -> AttributeSchema {
    AttributeSchema::protected("group", &["a", "b"]).expect("valid schema")
}

fn default_other_attributes() -> Vec<OtherAttribute> {
    vec![
        OtherAttribute::Categorical {
            name: "age".into(),
            values: vec!["18-34".into(), "35-54".into(), "55+".into()],
        },
        OtherAttribute::Categorical {
            name: "region".into(),
            values: vec!["north".into(), "south".into(), "east".into(), "west".into()],
        },
        OtherAttribute::Numeric {
            name: "income".into(),
            min: 0.0,
            max: 100.0,
        },
    ]
}

fn default_attribute() -> AttributeSchema {
    AttributeSchema::differentiating("stance", &["pro", "con"]).expect("valid schema")
}

fn default_queries() -> Vec<QuerySpec> {
    uniform_battery(&default_attribute(), 5)
}

fn default_list_depth() -> usize {
    10
}

fn default_item_pool_size() -> usize {
    20
}

/// `n` queries `q000, q001, ...` with uniform ground truth over `attribute`.
pub fn uniform_battery(attribute: &AttributeSchema, n: usize) -> Vec<QuerySpec> {
    let m = attribute.values().len();
    (0..n)
        .map(|i| QuerySpec {
            query_id: format!("q{i:03}"),
            ground_truth: GroundTruth::from_vector(attribute, &vec![1.0 / m as f64; m])
                .expect("uniform ground truth"),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_users: usize,
    /// Class P is the first value; partners take the other values in turn.
    #[serde(default = "default_protected")]
    pub protected: AttributeSchema,
    #[serde(default = "default_other_attributes")]
    pub other_attributes: Vec<OtherAttribute>,
    /// The differentiating attribute every item is annotated with.
    #[serde(default = "default_attribute")]
    pub attribute: AttributeSchema,
    #[serde(default = "default_queries")]
    pub queries: Vec<QuerySpec>,
    #[serde(default = "default_list_depth")]
    pub list_depth: usize,
    #[serde(default = "default_item_pool_size")]
    pub item_pool_size: usize,
    #[serde(default)]
    pub content_shift: ContentShift,
    /// Swap probability per adjacent template pair, in `[0, 1]`.
    #[serde(default)]
    pub ranking_divergence: f64,
    /// Serve matched partners from the same random stream.
    #[serde(default)]
    pub pair_coupling: bool,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    /// A scenario with default attributes and battery and no injected bias.
    pub fn new(n_users: usize, seed: u64) -> Self {
        ScenarioConfig {
            n_users,
            protected: default_protected(),
            other_attributes: default_other_attributes(),
            attribute: default_attribute(),
            queries: default_queries(),
            list_depth: default_list_depth(),
            item_pool_size: default_item_pool_size(),
            content_shift: ContentShift::default(),
            ranking_divergence: 0.0,
            pair_coupling: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users < 2 || !self.n_users.is_multiple_of(2) {
            return Err(BiasError::Parameter(format!(
                "n_users must be even and at least 2, got {}",
                self.n_users
            )));
        }
        if self.protected.kind() != AttributeKind::Protected {
            return Err(BiasError::Schema(format!(
                "{:?} is not declared protected",
                self.protected.name()
            )));
        }
        if self.attribute.kind() != AttributeKind::Differentiating {
            return Err(BiasError::Schema(format!(
                "{:?} is not declared differentiating",
                self.attribute.name()
            )));
        }
        let mut names = std::collections::BTreeSet::from([self.protected.name()]);
        for a in &self.other_attributes {
            if !names.insert(a.name()) {
                return Err(BiasError::Schema(format!(
                    "duplicate user attribute {:?}",
                    a.name()
                )));
            }
            match a {
                OtherAttribute::Categorical { values, .. } if values.is_empty() => {
                    return Err(BiasError::Schema(format!("{:?} has no values", a.name())));
                }
                OtherAttribute::Numeric { min, max, .. }
                    if !(min.is_finite() && max.is_finite() && min <= max) =>
                {
                    return Err(BiasError::Schema(format!(
                        "{:?} has an invalid range",
                        a.name()
                    )));
                }
                _ => {}
            }
        }
        if self.queries.is_empty() {
            return Err(BiasError::Parameter("the query battery is empty".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for q in &self.queries {
            if !ids.insert(q.query_id.as_str()) {
                return Err(BiasError::Parameter(format!(
                    "duplicate query {:?}",
                    q.query_id
                )));
            }
        }
        if self.list_depth == 0 {
            return Err(BiasError::Parameter("list_depth must be at least 1".into()));
        }
        if self.item_pool_size < self.list_depth {
            return Err(BiasError::Parameter(format!(
                "item_pool_size {} is smaller than list_depth {}",
                self.item_pool_size, self.list_depth
            )));
        }
        if !(0.0..=1.0).contains(&self.ranking_divergence) {
            return Err(BiasError::Parameter(format!(
                "ranking_divergence must lie in [0, 1], got {}",
                self.ranking_divergence
            )));
        }
        for q in &self.queries {
            let truth = self.truth(q)?;
            for shift in [self.content_shift.protected, self.content_shift.unprotected] {
                let p = truth[0] + shift;
                if !(-1e-12..=1.0 + 1e-12).contains(&p) {
                    return Err(BiasError::Parameter(format!(
                        "content shift {shift} moves {:?} of query {:?} to {p}, outside [0, 1]",
                        self.attribute.values()[0],
                        q.query_id
                    )));
                }
            }
        }
        Ok(())
    }

    fn truth(&self, q: &QuerySpec) -> Result<Vec<f64>> {
        Ok(q.ground_truth
            .to_distribution(&self.attribute)?
            .probabilities()
            .to_vec())
    }

    /// The class the simulator treats as protected.
    pub fn protected_class(&self) -> ProtectedClass {
        ProtectedClass::new(self.protected.name(), self.protected.values()[0].as_str())
    }

    /// Every non-protected attribute, as used by the user distance.
    pub fn relevant_attributes(&self) -> Vec<RelevantAttribute> {
        self.other_attributes
            .iter()
            .map(OtherAttribute::relevant)
            .collect()
    }

    fn user_id(&self, index: usize) -> String {
        let width = (self.n_users - 1).to_string().len().max(4);
        format!("u{index:0width$}")
    }
}

/// A query as handed to the provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDescriptor {
    pub query_id: String,
    pub attribute: AttributeSchema,
    pub ground_truth: GroundTruth,
}

/// Matched-pair profiles: user `2i` is in class P, user `2i + 1` is its
/// partner with identical non-protected attributes.
pub fn generate_profiles(cfg: &ScenarioConfig) -> Result<Vec<UserProfile>> {
    cfg.validate()?;
    let values = cfg.protected.values();
    let mut out = Vec::with_capacity(cfg.n_users);
    for pair in 0..cfg.n_users / 2 {
        let mut rng = SimRng::keyed(cfg.seed, &[b"profile", &(pair as u64).to_le_bytes()]);
        let other: BTreeMap<String, AttrValue> = cfg
            .other_attributes
            .iter()
            .map(|a| (a.name().to_string(), a.sample(&mut rng)))
            .collect();
        let partner_value = &values[1 + pair % (values.len() - 1)];
        for (offset, value) in [(0, &values[0]), (1, partner_value)] {
            let protected = BTreeMap::from([(
                cfg.protected.name().to_string(),
                AttrValue::Text(value.clone()),
            )]);
            out.push(UserProfile::new(
                cfg.user_id(2 * pair + offset),
                protected,
                other.clone(),
            )?);
        }
    }
    Ok(out)
}

pub fn generate_queries(cfg: &ScenarioConfig) -> Result<Vec<QueryDescriptor>> {
    cfg.validate()?;
    Ok(cfg
        .queries
        .iter()
        .map(|q| QueryDescriptor {
            query_id: q.query_id.clone(),
            attribute: cfg.attribute.clone(),
            ground_truth: q.ground_truth.clone(),
        })
        .collect())
}

/// Per-query state shared by every list served for the query.
struct QueryModel<'c> {
    spec: &'c QuerySpec,
    /// Position of each pool item in the unprotected and protected templates.
    position: [Vec<u32>; 2],
    /// Cumulative annotation probabilities, unprotected then protected.
    cumulative: [Vec<f64>; 2],
}

fn shifted(truth: &[f64], shift: f64) -> Vec<f64> {
    let p1 = (truth[0] + shift).clamp(0.0, 1.0);
    let rest: f64 = truth[1..].iter().sum();
    let m = truth.len();
    let mut out = vec![p1];
    for &t in &truth[1..] {
        out.push(if rest > 0.0 {
            t * (1.0 - p1) / rest
        } else {
            (1.0 - p1) / (m - 1) as f64
        });
    }
    out
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

impl<'c> QueryModel<'c> {
    fn new(cfg: &'c ScenarioConfig, spec: &'c QuerySpec) -> Result<Self> {
        let q = spec.query_id.as_bytes();
        let pool = cfg.item_pool_size;
        let mut base: Vec<u32> = (0..pool as u32).collect();
        SimRng::keyed(cfg.seed, &[b"template", q]).shuffle(&mut base);
        let mut protected = base.clone();
        let mut rng = SimRng::keyed(cfg.seed, &[b"divergence", q]);
        for i in (0..pool.saturating_sub(1)).step_by(2) {
            if rng.bernoulli(cfg.ranking_divergence) {
                protected.swap(i, i + 1);
            }
        }
        let positions = |template: &[u32]| {
            let mut pos = vec![0u32; pool];
            for (p, &item) in template.iter().enumerate() {
                pos[item as usize] = p as u32;
            }
            pos
        };
        let truth = cfg.truth(spec)?;
        Ok(QueryModel {
            spec,
            position: [positions(&base), positions(&protected)],
            cumulative: [
                cumulative(&shifted(&truth, cfg.content_shift.unprotected)),
                cumulative(&shifted(&truth, cfg.content_shift.protected)),
            ],
        })
    }

    fn serve(&self, cfg: &ScenarioConfig, profile: &UserProfile) -> Result<RankedList> {
        let class = usize::from(cfg.protected_class().contains(profile)?);
        let q = self.spec.query_id.as_bytes();
        let mut rng = if cfg.pair_coupling {
            let key = serde_json::to_string(profile.other()).expect("attribute map serializes");
            SimRng::keyed(cfg.seed, &[b"serve-coupled", q, key.as_bytes()])
        } else {
            SimRng::keyed(cfg.seed, &[b"serve", q, profile.user_id().as_bytes()])
        };
        let mut items = rng.sample_indices(cfg.item_pool_size, cfg.list_depth);
        let pos = &self.position[class];
        items.sort_by_key(|&i| pos[i]);
        let cum = &self.cumulative[class];
        let values = cfg.attribute.values();
        let ranked = items
            .into_iter()
            .map(|i| {
                let u = rng.uniform();
                let v = cum.iter().position(|&c| u < c).unwrap_or(values.len() - 1);
                ResultItem::with_value(
                    format!("{}:item{i:04}", self.spec.query_id),
                    cfg.attribute.name(),
                    &values[v],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        RankedList::new(&self.spec.query_id, profile.user_id(), ranked)
    }
}

fn model<'c>(cfg: &'c ScenarioConfig, query_id: &str) -> Result<QueryModel<'c>> {
    let spec = cfg
        .queries
        .iter()
        .find(|q| q.query_id == query_id)
        .ok_or_else(|| BiasError::Input(format!("query {query_id:?} is not in the battery")))?;
    QueryModel::new(cfg, spec)
}

/// The list the simulated provider returns to `profile` for `query_id`.
pub fn serve(cfg: &ScenarioConfig, profile: &UserProfile, query_id: &str) -> Result<RankedList> {
    cfg.validate()?;
    model(cfg, query_id)?.serve(cfg, profile)
}

/// Profiles and every list they receive, in user then query order.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub profiles: Vec<UserProfile>,
    pub queries: Vec<QueryDescriptor>,
    pub lists: Vec<RankedList>,
}

pub fn simulate(cfg: &ScenarioConfig) -> Result<Simulation> {
    let profiles = generate_profiles(cfg)?;
    let queries = generate_queries(cfg)?;
    let models = cfg
        .queries
        .iter()
        .map(|q| QueryModel::new(cfg, q))
        .collect::<Result<Vec<_>>>()?;
    let per_user = profiles
        .par_iter()
        .map(|p| {
            models
                .iter()
                .map(|m| m.serve(cfg, p))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulation {
        profiles,
        queries,
        lists: per_user.into_iter().flatten().collect(),
    })
}

impl Simulation {
    /// An audit over the simulated lists, with each query's ground truth
    /// attached and the scenario's attributes as the user distance.
    pub fn audit_input(
        &self,
        cfg: &ScenarioConfig,
        mut config: MeasureConfig,
    ) -> Result<AuditInput> {
        if config.relevant_attributes.is_empty() {
            config.relevant_attributes = cfg.relevant_attributes();
        }
        let mut input = AuditInput::new(
            self.profiles.clone(),
            self.lists.iter().cloned(),
            cfg.protected_class(),
            cfg.attribute.clone(),
            config,
        )?;
        for q in &self.queries {
            input = input.with_query_ground_truth(&q.query_id, q.ground_truth.clone())?;
        }
        Ok(input)
    }
}
