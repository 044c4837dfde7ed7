//! Audit manifests, orchestration and reports.
//!
//! A manifest names either recorded result lists (with profiles, a schema
//! and optionally ground truth) or a simulator scenario. Relative paths are
//! resolved against the manifest's directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, ListCollection};
use crate::error::{BiasError, Result};
use crate::io::{self, GroundTruthFile, SchemaFile};
use crate::measures::prepared::Prepared;
use crate::measures::{
    comparative_bias, evaluate_echo, evaluate_on, AuditInput, BiasVerdict, ClassSide,
    ComparativeVerdict, EchoChamberResult, Measure, MeasureConfig, ProtectedClass,
};
use crate::ranking::{AttrValue, AttributeSchema, GroundTruth, RankedList};
use crate::simulator::{simulate, ScenarioConfig, Simulation};
use crate::stats::{bootstrap_cis_prepared, permutation_tests_prepared, SignificanceResult};

pub const REPORT_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const COMPARISON_FILE: &str = "comparison.json";

/// A scenario given by path or written inline.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    Path(PathBuf),
    Inline(Box<ScenarioConfig>),
}

// Hand-written so a malformed inline scenario reports the field at fault
// rather than a generic untagged-enum mismatch.
impl<'de> Deserialize<'de> for ScenarioSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(p) => Ok(ScenarioSource::Path(p.into())),
            v => serde_json::from_value(v)
                .map(|c| ScenarioSource::Inline(Box::new(c)))
                .map_err(|e| serde::de::Error::custom(format!("scenario: {e}"))),
        }
    }
}

fn default_permutations() -> usize {
    1000
}
fn default_resamples() -> usize {
    1000
}
fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_resamples")]
    pub n_resamples: usize,
    #[serde(default = "default_level")]
    pub confidence_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignificanceConfig {
    #[serde(default = "default_permutations")]
    pub n_permutations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapConfig>,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            n_permutations: default_permutations(),
            seed: 0,
            bootstrap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_lists: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected: Option<ProtectedClass>,
    /// Differentiating attribute to audit; defaults to the only one declared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    #[serde(default)]
    pub config: MeasureConfig,
    /// Measures to run; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measures: Option<Vec<Measure>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significance: Option<SignificanceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl AuditManifest {
    /// A manifest over recorded lists.
    pub fn for_lists(
        profiles: impl Into<PathBuf>,
        result_lists: impl Into<PathBuf>,
        schema: impl Into<PathBuf>,
        protected: ProtectedClass,
    ) -> Self {
        AuditManifest {
            profiles: Some(profiles.into()),
            result_lists: Some(result_lists.into()),
            scenario: None,
            schema: Some(schema.into()),
            ground_truth: None,
            protected: Some(protected),
            attribute: None,
            config: MeasureConfig::default(),
            measures: None,
            significance: None,
            output_dir: None,
            base_dir: PathBuf::new(),
        }
    }

    pub fn for_scenario(scenario: ScenarioConfig) -> Self {
        AuditManifest {
            profiles: None,
            result_lists: None,
            scenario: Some(ScenarioSource::Inline(Box::new(scenario))),
            schema: None,
            ground_truth: None,
            protected: None,
            attribute: None,
            config: MeasureConfig::default(),
            measures: None,
            significance: None,
            output_dir: None,
            base_dir: PathBuf::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: AuditManifest = io::load_json(path)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        match (&self.result_lists, &self.scenario) {
            (Some(_), None) => {
                for (field, present) in [
                    ("profiles", self.profiles.is_some()),
                    ("schema", self.schema.is_some()),
                    ("protected", self.protected.is_some()),
                ] {
                    if !present {
                        return Err(BiasError::Config(format!(
                            "a manifest with result_lists needs `{field}`"
                        )));
                    }
                }
            }
            (None, Some(_)) => {
                for (field, present) in [
                    ("profiles", self.profiles.is_some()),
                    ("schema", self.schema.is_some()),
                    ("ground_truth", self.ground_truth.is_some()),
                    ("protected", self.protected.is_some()),
                    ("attribute", self.attribute.is_some()),
                ] {
                    if present {
                        return Err(BiasError::Config(format!(
                            "`{field}` comes from the scenario and cannot be set alongside it"
                        )));
                    }
                }
            }
            _ => {
                return Err(BiasError::Config(
                    "a manifest needs exactly one of `result_lists` and `scenario`".into(),
                ))
            }
        }
        if let Some(measures) = &self.measures {
            if measures.is_empty() {
                return Err(BiasError::Config("`measures` is empty".into()));
            }
        }
        Ok(())
    }

    pub fn is_simulation(&self) -> bool {
        self.scenario.is_some()
    }

    /// The scenario, read from disk if given by path.
    pub fn scenario_config(&self) -> Result<Option<ScenarioConfig>> {
        match &self.scenario {
            None => Ok(None),
            Some(ScenarioSource::Inline(s)) => Ok(Some((**s).clone())),
            Some(ScenarioSource::Path(p)) => Ok(Some(io::load_json(self.resolve(p))?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditMode {
    Lists,
    Simulated,
}

/// Everything a manifest resolves to.
#[derive(Debug, Clone)]
pub struct AuditData {
    pub input: AuditInput,
    pub mode: AuditMode,
    pub warnings: Vec<String>,
    pub simulation: Option<Simulation>,
}

fn check_truth_attribute(gt: &GroundTruth, schema: &AttributeSchema) -> Result<()> {
    if gt.attribute() != schema.name() {
        return Err(BiasError::Schema(format!(
            "ground truth is for {:?}, the audited attribute is {:?}",
            gt.attribute(),
            schema.name()
        )));
    }
    Ok(())
}

pub fn load_audit_data(m: &AuditManifest) -> Result<AuditData> {
    m.validate()?;
    if let Some(cfg) = m.scenario_config()? {
        let sim = simulate(&cfg)?;
        let input = sim.audit_input(&cfg, m.config.clone())?;
        return Ok(AuditData {
            input,
            mode: AuditMode::Simulated,
            warnings: Vec::new(),
            simulation: Some(sim),
        });
    }
    let need = |p: &Option<PathBuf>| m.resolve(p.as_deref().expect("validated"));
    let schema: SchemaFile = io::load_json(need(&m.schema))?;
    let attribute = schema.differentiating(m.attribute.as_deref())?.clone();
    let profiles = io::load_profiles(need(&m.profiles))?;
    schema.check_profiles(&profiles)?;
    let loaded = io::load_result_lists(need(&m.result_lists))?;
    let protected = m.protected.clone().expect("validated");
    let mut input = AuditInput::new(
        profiles,
        loaded.lists.into_values(),
        protected,
        attribute,
        m.config.clone(),
    )?;
    if let Some(path) = &m.ground_truth {
        match io::load_json::<GroundTruthFile>(m.resolve(path))? {
            GroundTruthFile::Single(gt) => {
                check_truth_attribute(&gt, input.attribute())?;
                input = input.with_ground_truth(gt)?;
            }
            GroundTruthFile::PerQuery { default, queries } => {
                if let Some(gt) = default {
                    check_truth_attribute(&gt, input.attribute())?;
                    input = input.with_ground_truth(gt)?;
                }
                for (q, gt) in queries {
                    check_truth_attribute(&gt, input.attribute())?;
                    input = input.with_query_ground_truth(q, gt)?;
                }
            }
        }
    }
    Ok(AuditData {
        input,
        mode: AuditMode::Lists,
        warnings: loaded.warnings,
        simulation: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Computed,
    Skipped,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureEntry {
    pub measure: Measure,
    pub status: EntryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<BiasVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significance: Option<SignificanceResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_interval: Option<ConfidenceInterval>,
}

impl MeasureEntry {
    fn bare(measure: Measure, status: EntryStatus, reason: Option<String>) -> Self {
        MeasureEntry {
            measure,
            status,
            reason,
            verdict: None,
            significance: None,
            confidence_interval: None,
        }
    }
}

/// One row of the per-class comparison of non-protected attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub attribute: String,
    /// Set for categorical attributes, whose rows give the share of users
    /// holding the value; numeric attributes get one row with class means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub protected: f64,
    pub unprotected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub report_version: u32,
    pub mode: AuditMode,
    pub protected: ProtectedClass,
    pub attribute: String,
    pub n_users: usize,
    pub class_sizes: BTreeMap<String, usize>,
    pub queries: Vec<String>,
    pub config: MeasureConfig,
    pub entries: Vec<MeasureEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echo_chamber: Option<EchoChamberResult>,
    pub attribute_balance: Vec<BalanceRow>,
    pub warnings: Vec<String>,
    pub caveats: Vec<String>,
}

impl AuditReport {
    pub fn entry(&self, measure: Measure) -> Option<&MeasureEntry> {
        self.entries.iter().find(|e| e.measure == measure)
    }

    pub fn verdict(&self, measure: Measure) -> Option<&BiasVerdict> {
        self.entry(measure).and_then(|e| e.verdict.as_ref())
    }
}

/// What to run on an [`AuditInput`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditOptions {
    /// Empty means every measure.
    pub measures: Vec<Measure>,
    pub significance: Option<SignificanceConfig>,
}

const CAVEATS: [&str; 3] = [
    "Permutation tests and bootstrap intervals treat users as the sampling unit; lists of one user across queries are not independent.",
    "Default thresholds are engineering choices: 0.05 for distribution measures, 0.1 for list-space measures.",
    "The attribute balance table describes the classes; it does not explain the cause of any bias.",
];

fn balance_table(input: &AuditInput) -> Vec<BalanceRow> {
    let profiles = input.profiles();
    let in_p: Vec<bool> = profiles
        .iter()
        .map(|u| input.protected().contains(u).unwrap_or(false))
        .collect();
    let (n_p, n_q) = input.class_sizes();
    let mut names: Vec<&String> = profiles.iter().flat_map(|p| p.other().keys()).collect();
    names.sort();
    names.dedup();
    let mut rows = Vec::new();
    for name in names {
        let vals: Vec<(Option<&AttrValue>, bool)> = profiles
            .iter()
            .zip(&in_p)
            .map(|(p, &c)| (p.other().get(name), c))
            .collect();
        let all_numbers = vals
            .iter()
            .all(|(v, _)| matches!(v, Some(AttrValue::Number(_))));
        let share = |hit: &dyn Fn(&AttrValue) -> f64, class: bool, n: usize| {
            if n == 0 {
                return 0.0;
            }
            vals.iter()
                .filter(|(_, c)| *c == class)
                .map(|(v, _)| v.map_or(0.0, hit))
                .sum::<f64>()
                / n as f64
        };
        if all_numbers {
            let num = |v: &AttrValue| match v {
                AttrValue::Number(x) => *x,
                AttrValue::Text(_) => 0.0,
            };
            rows.push(BalanceRow {
                attribute: name.clone(),
                value: None,
                protected: share(&num, true, n_p),
                unprotected: share(&num, false, n_q),
            });
            continue;
        }
        let mut levels: Vec<String> = vals
            .iter()
            .filter_map(|(v, _)| v.map(|v| v.to_string()))
            .collect();
        levels.sort();
        levels.dedup();
        for level in levels {
            let hit = |v: &AttrValue| f64::from(u8::from(v.to_string() == level));
            rows.push(BalanceRow {
                attribute: name.clone(),
                value: Some(level.clone()),
                protected: share(&hit, true, n_p),
                unprotected: share(&hit, false, n_q),
            });
        }
    }
    rows
}

fn skip_reason(input: &AuditInput, measure: Measure) -> Option<String> {
    if measure.needs_ground_truth() && !input.has_ground_truth() {
        return Some("no ground truth; use a comparative audit instead".into());
    }
    if measure == Measure::IndividualUserBias && input.config().relevant_attributes.is_empty() {
        return Some("relevant_attributes is not configured".into());
    }
    None
}

/// Runs the selected measures, and significance procedures when asked.
pub fn run_measures(
    input: &AuditInput,
    options: &AuditOptions,
    mode: AuditMode,
) -> Result<AuditReport> {
    let measures: Vec<Measure> = if options.measures.is_empty() {
        Measure::ALL.to_vec()
    } else {
        options.measures.clone()
    };
    if measures.iter().all(|&m| skip_reason(input, m).is_some()) {
        let reasons: Vec<String> = measures
            .iter()
            .map(|&m| {
                format!(
                    "{}: {}",
                    m.name(),
                    skip_reason(input, m).unwrap_or_default()
                )
            })
            .collect();
        return Err(BiasError::Config(format!(
            "no applicable measures ({})",
            reasons.join("; ")
        )));
    }
    let prep = Prepared::new(input)?;
    let full = prep.full_sample();
    let mut entries = Vec::with_capacity(measures.len());
    let mut echo = None;
    for &measure in &measures {
        if let Some(reason) = skip_reason(input, measure) {
            entries.push(MeasureEntry::bare(
                measure,
                EntryStatus::Skipped,
                Some(reason),
            ));
            continue;
        }
        let verdict = if measure == Measure::EchoChamber {
            evaluate_echo(&prep, &full).map(|r| {
                let v = r.verdict.clone();
                echo = Some(r);
                v
            })
        } else {
            evaluate_on(&prep, &full, measure, true)
        };
        let verdict = match verdict {
            Ok(v) => v,
            Err(e) => {
                entries.push(MeasureEntry::bare(
                    measure,
                    EntryStatus::Error,
                    Some(e.to_string()),
                ));
                continue;
            }
        };
        let mut entry = MeasureEntry::bare(measure, EntryStatus::Computed, None);
        entry.verdict = Some(verdict);
        entries.push(entry);
    }
    if let Some(sig) = &options.significance {
        attach_significance(&prep, sig, &mut entries)?;
    }
    let (n_p, n_q) = input.class_sizes();
    Ok(AuditReport {
        report_version: REPORT_VERSION,
        mode,
        protected: input.protected().clone(),
        attribute: input.attribute().name().to_string(),
        n_users: input.profiles().len(),
        class_sizes: BTreeMap::from([
            (ClassSide::Protected.label().to_string(), n_p),
            (ClassSide::Unprotected.label().to_string(), n_q),
        ]),
        queries: input.queries().into_iter().map(String::from).collect(),
        config: input.config().clone(),
        entries,
        echo_chamber: echo,
        attribute_balance: balance_table(input),
        warnings: Vec::new(),
        caveats: CAVEATS.iter().map(|c| c.to_string()).collect(),
    })
}

/// Permutation tests for computed class-level measures and bootstrap
/// intervals for every computed measure, each run on shared replicates.
fn attach_significance(
    prep: &Prepared<'_>,
    sig: &SignificanceConfig,
    entries: &mut [MeasureEntry],
) -> Result<()> {
    let computed: Vec<usize> = (0..entries.len())
        .filter(|&i| entries[i].status == EntryStatus::Computed)
        .collect();
    let group: Vec<usize> = computed
        .iter()
        .copied()
        .filter(|&i| entries[i].measure.is_group())
        .collect();
    if !group.is_empty() {
        let measures: Vec<Measure> = group.iter().map(|&i| entries[i].measure).collect();
        let results = permutation_tests_prepared(prep, &measures, sig.n_permutations, sig.seed)?;
        for (i, r) in group.into_iter().zip(results) {
            entries[i].significance = Some(r);
        }
    }
    if let Some(b) = &sig.bootstrap {
        let measures: Vec<Measure> = computed.iter().map(|&i| entries[i].measure).collect();
        let cis =
            bootstrap_cis_prepared(prep, &measures, b.n_resamples, b.confidence_level, sig.seed)?;
        for (i, (lo, hi)) in computed.into_iter().zip(cis) {
            entries[i].confidence_interval = Some(ConfidenceInterval {
                level: b.confidence_level,
                lo,
                hi,
                n_resamples: b.n_resamples,
                seed: sig.seed,
            });
        }
    }
    Ok(())
}

/// Resolves a manifest and audits it.
pub fn run_audit(manifest: &AuditManifest) -> Result<AuditReport> {
    let data = load_audit_data(manifest)?;
    let options = AuditOptions {
        measures: manifest.measures.clone().unwrap_or_default(),
        significance: manifest.significance.clone(),
    };
    let mut report = run_measures(&data.input, &options, data.mode)?;
    report.warnings = data.warnings;
    Ok(report)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Plain-text rendering of a report.
pub fn summary_text(r: &AuditReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "bias audit report (version {})", r.report_version);
    let _ = writeln!(
        s,
        "mode: {:?}; users: {} (P {}, P-bar {}); queries: {}",
        r.mode,
        r.n_users,
        r.class_sizes.get("P").copied().unwrap_or(0),
        r.class_sizes.get("P-bar").copied().unwrap_or(0),
        r.queries.len()
    );
    let _ = writeln!(
        s,
        "protected class: {} = {}; audited attribute: {}",
        r.protected.attribute, r.protected.value, r.attribute
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<26} {:>9} {:>9} {:>6} {:>8} {:>19}",
        "measure", "magnitude", "threshold", "biased", "p-value", "interval"
    );
    for e in &r.entries {
        match (&e.status, &e.verdict) {
            (EntryStatus::Computed, Some(v)) => {
                let ci = e.confidence_interval.as_ref().map_or_else(
                    || "-".to_string(),
                    |c| format!("[{:.4}, {:.4}]", c.lo, c.hi),
                );
                let _ = writeln!(
                    s,
                    "{:<26} {:>9.4} {:>9.4} {:>6} {:>8} {:>19}",
                    e.measure.name(),
                    v.magnitude,
                    v.threshold,
                    if v.biased { "yes" } else { "no" },
                    fmt_opt(e.significance.as_ref().map(|x| x.p_value)),
                    ci
                );
            }
            (status, _) => {
                let _ = writeln!(
                    s,
                    "{:<26} {:?}: {}",
                    e.measure.name(),
                    status,
                    e.reason.as_deref().unwrap_or("")
                );
            }
        }
    }
    if let Some(echo) = &r.echo_chamber {
        let _ = writeln!(s);
        if echo.flagged {
            let _ = writeln!(
                s,
                "echo chamber pattern on: {}",
                echo.flagged_values.join(", ")
            );
        } else {
            let _ = writeln!(s, "no echo chamber pattern");
        }
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

/// Writes `report.json` and `summary.txt` into `dir`.
pub fn write_report(report: &AuditReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| BiasError::io(dir, e))?;
    io::save_json(dir.join(REPORT_FILE), report)?;
    io::write_atomic(dir.join(SUMMARY_FILE), summary_text(report).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub report_version: u32,
    pub attribute: String,
    /// Keyed by scope: `all`, `P` and `P-bar`.
    pub scopes: BTreeMap<String, ComparativeVerdict>,
    pub warnings: Vec<String>,
}

/// Per-query representative lists of the users selected by `keep`.
fn representatives(
    input: &AuditInput,
    keep: impl Fn(bool) -> bool,
) -> Result<BTreeMap<String, RankedList>> {
    let cfg = input.config();
    let members: std::collections::BTreeSet<&str> = input
        .profiles()
        .iter()
        .filter(|u| keep(input.protected().contains(u).unwrap_or(false)))
        .map(|u| u.user_id())
        .collect();
    let mut out = BTreeMap::new();
    for q in input.queries() {
        let lists: Vec<RankedList> = input
            .lists()
            .values()
            .filter(|l| l.query_id() == q && members.contains(l.user_id()))
            .cloned()
            .collect();
        if lists.is_empty() {
            continue;
        }
        let depth = lists
            .iter()
            .map(RankedList::depth)
            .max()
            .unwrap_or(1)
            .clamp(1, cfg.k);
        let rep = aggregate(&ListCollection::new(q, lists), cfg.aggregator, depth)?;
        out.insert(q.to_string(), rep);
    }
    Ok(out)
}

/// Compares the representative lists of two audits; the first manifest's
/// configuration governs the comparison.
pub fn compare_audit(a: &AuditManifest, b: &AuditManifest) -> Result<ComparisonReport> {
    let da = load_audit_data(a)?;
    let db = load_audit_data(b)?;
    compare_inputs(&da.input, &db.input).map(|mut r| {
        r.warnings = da.warnings.into_iter().chain(db.warnings).collect();
        r
    })
}

pub fn compare_inputs(a: &AuditInput, b: &AuditInput) -> Result<ComparisonReport> {
    if a.attribute() != b.attribute() {
        return Err(BiasError::Schema(format!(
            "the audits use different attributes: {:?} and {:?}",
            a.attribute().name(),
            b.attribute().name()
        )));
    }
    let cfg = a.config();
    let mut scopes = BTreeMap::new();
    type Selector = fn(bool) -> bool;
    let selectors: [(&str, Selector); 3] = [("all", |_| true), ("P", |p| p), ("P-bar", |p| !p)];
    for (name, keep) in selectors {
        let ra = representatives(a, keep)?;
        let rb = representatives(b, keep)?;
        if name != "all" && (ra.is_empty() || rb.is_empty()) {
            continue;
        }
        scopes.insert(
            name.to_string(),
            comparative_bias(&ra, &rb, a.attribute(), cfg)?,
        );
    }
    Ok(ComparisonReport {
        report_version: REPORT_VERSION,
        attribute: a.attribute().name().to_string(),
        scopes,
        warnings: Vec::new(),
    })
}

pub fn write_comparison(report: &ComparisonReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| BiasError::io(dir, e))?;
    io::save_json(dir.join(COMPARISON_FILE), report)
}

/// Writes the simulated profiles, lists, schema and ground truth next to a
/// manifest that audits them, so the data can be audited again as
/// recorded lists.
pub fn export_simulation(
    cfg: &ScenarioConfig,
    sim: &Simulation,
    config: &MeasureConfig,
    dir: impl AsRef<Path>,
) -> Result<AuditManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| BiasError::io(dir, e))?;
    io::save_profiles(dir.join("profiles.jsonl"), &sim.profiles)?;
    io::save_result_lists(dir.join("lists.jsonl"), &sim.lists)?;
    io::save_json(
        dir.join("schema.json"),
        &SchemaFile {
            attributes: vec![cfg.protected.clone(), cfg.attribute.clone()],
        },
    )?;
    let truth = GroundTruthFile::PerQuery {
        default: None,
        queries: sim
            .queries
            .iter()
            .map(|q| (q.query_id.clone(), q.ground_truth.clone()))
            .collect(),
    };
    io::save_json(dir.join("ground_truth.json"), &truth)?;
    let mut config = config.clone();
    if config.relevant_attributes.is_empty() {
        config.relevant_attributes = cfg.relevant_attributes();
    }
    let mut manifest = AuditManifest::for_lists(
        "profiles.jsonl",
        "lists.jsonl",
        "schema.json",
        cfg.protected_class(),
    );
    manifest.ground_truth = Some("ground_truth.json".into());
    manifest.attribute = Some(cfg.attribute.name().to_string());
    manifest.config = config;
    io::save_json(dir.join("manifest.json"), &manifest)?;
    manifest.base_dir = dir.to_path_buf();
    Ok(manifest)
}
