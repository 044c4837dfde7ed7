use std::fs;

use biasmeter::audit::{
    compare_audit, export_simulation, load_audit_data, run_audit, summary_text, write_report,
    AuditManifest, EntryStatus, SignificanceConfig, REPORT_FILE, SUMMARY_FILE,
};
use biasmeter::io::{load_profiles, load_result_lists};
use biasmeter::measures::{Measure, MeasureConfig};
use biasmeter::ranking::{GroundTruth, ListDistanceKind};
use biasmeter::simulator::{simulate, uniform_battery, ContentShift, QuerySpec, ScenarioConfig};
use biasmeter::BiasError;
use tempfile::TempDir;

fn small(seed: u64, delta: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(40, seed);
    cfg.queries = uniform_battery(&cfg.attribute, 2);
    cfg.content_shift = ContentShift::opposite(delta);
    cfg
}

/// Exports a simulation and returns the manifest that audits it.
fn exported(dir: &TempDir, cfg: &ScenarioConfig) -> AuditManifest {
    let sim = simulate(cfg).unwrap();
    export_simulation(cfg, &sim, &MeasureConfig::default(), dir.path()).unwrap();
    AuditManifest::load(dir.path().join("manifest.json")).unwrap()
}

#[test]
fn exported_data_reloads_unchanged() {
    let dir = TempDir::new().unwrap();
    let cfg = small(1, 0.1);
    let sim = simulate(&cfg).unwrap();
    let m = exported(&dir, &cfg);
    let lists = load_result_lists(m.resolve("lists.jsonl".as_ref())).unwrap();
    assert!(lists.warnings.is_empty());
    let original: Vec<_> = sim.lists.iter().collect();
    let reloaded: Vec<_> = lists.lists.values().collect();
    assert_eq!(original, reloaded);
    assert_eq!(
        load_profiles(dir.path().join("profiles.jsonl")).unwrap(),
        sim.profiles
    );
}

#[test]
fn recorded_and_simulated_audits_agree() {
    let dir = TempDir::new().unwrap();
    let cfg = small(2, 0.1);
    let lists = run_audit(&exported(&dir, &cfg)).unwrap();
    let simulated = run_audit(&AuditManifest::for_scenario(cfg)).unwrap();
    for m in Measure::ALL {
        assert_eq!(lists.verdict(m), simulated.verdict(m), "{m:?}");
    }
}

#[test]
fn missing_ground_truth_skips_dependent_measures() {
    let dir = TempDir::new().unwrap();
    let mut m = exported(&dir, &small(3, 0.0));
    m.ground_truth = None;
    let report = run_audit(&m).unwrap();
    assert_eq!(report.entries.len(), Measure::ALL.len());
    for e in &report.entries {
        let skipped = e.status == EntryStatus::Skipped;
        assert_eq!(skipped, e.measure.needs_ground_truth(), "{:?}", e.measure);
        assert_eq!(skipped, e.verdict.is_none());
        if skipped {
            assert!(e.reason.is_some());
        }
    }
    assert!(report.echo_chamber.is_none());
}

#[test]
fn no_applicable_measures_is_config_error() {
    let dir = TempDir::new().unwrap();
    let mut m = exported(&dir, &small(3, 0.0));
    m.ground_truth = None;
    m.measures = Some(vec![Measure::EchoChamber, Measure::ContentBiasUnprotected]);
    assert!(matches!(run_audit(&m), Err(BiasError::Config(_))));
}

#[test]
fn manifest_validation() {
    let mut m = AuditManifest::for_scenario(small(0, 0.0));
    m.result_lists = Some("l.jsonl".into());
    assert!(matches!(m.validate(), Err(BiasError::Config(_))));
    let mut m = AuditManifest::for_scenario(small(0, 0.0));
    m.scenario = None;
    assert!(matches!(m.validate(), Err(BiasError::Config(_))));
    let mut m = AuditManifest::for_scenario(small(0, 0.0));
    m.attribute = Some("stance".into());
    assert!(matches!(m.validate(), Err(BiasError::Config(_))));
    let mut m = AuditManifest::for_scenario(small(0, 0.0));
    m.measures = Some(Vec::new());
    assert!(matches!(m.validate(), Err(BiasError::Config(_))));
    let mut m = AuditManifest::for_scenario(small(0, 0.0));
    m.config.k = 0;
    assert!(m.validate().unwrap_err().is_configuration());
}

#[test]
fn null_scenario_reports_are_byte_identical() {
    let mut m = AuditManifest::for_scenario(small(4, 0.0));
    m.significance = Some(SignificanceConfig {
        n_permutations: 200,
        seed: 6,
        bootstrap: None,
    });
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    write_report(&run_audit(&m).unwrap(), a.path()).unwrap();
    write_report(&run_audit(&m).unwrap(), b.path()).unwrap();
    for f in [REPORT_FILE, SUMMARY_FILE] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap()
        );
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report["report_version"], 1);
}

#[test]
fn report_of_shifted_scenario() {
    let mut cfg = ScenarioConfig::new(20_000, 5);
    cfg.queries = uniform_battery(&cfg.attribute, 1);
    cfg.content_shift = ContentShift::opposite(0.15);
    let mut m = AuditManifest::for_scenario(cfg);
    m.measures = Some(vec![Measure::CombinedClassBias, Measure::EchoChamber]);
    let report = run_audit(&m).unwrap();
    let combined = report.verdict(Measure::CombinedClassBias).unwrap();
    assert!(
        (combined.magnitude - 0.30).abs() < 0.02,
        "{}",
        combined.magnitude
    );
    assert!(combined.biased);
    assert!(report.echo_chamber.as_ref().unwrap().flagged);
    let text = summary_text(&report);
    assert!(text.contains("combined_class_bias"));
}

#[test]
fn significance_and_intervals_are_attached() {
    let mut m = AuditManifest::for_scenario(small(6, 0.1));
    m.significance = Some(SignificanceConfig {
        n_permutations: 100,
        seed: 1,
        bootstrap: Some(biasmeter::audit::BootstrapConfig {
            n_resamples: 100,
            confidence_level: 0.9,
        }),
    });
    let report = run_audit(&m).unwrap();
    for e in &report.entries {
        assert_eq!(
            e.significance.is_some(),
            e.measure.is_group(),
            "{:?}",
            e.measure
        );
        let ci = e.confidence_interval.as_ref().unwrap();
        assert!(ci.lo <= ci.hi);
        assert_eq!(ci.level, 0.9);
    }
}

#[test]
fn compare_with_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let m = exported(&dir, &small(7, 0.1));
    let r = compare_audit(&m, &m).unwrap();
    assert_eq!(r.scopes.len(), 3);
    for v in r.scopes.values() {
        assert_eq!(v.distribution.magnitude, 0.0);
        assert_eq!(v.list.magnitude, 0.0);
        assert_eq!(v.shared_queries.len(), 2);
    }
}

#[test]
fn compare_shift_against_none() {
    let mut a = ScenarioConfig::new(10_000, 8);
    a.queries = uniform_battery(&a.attribute, 1);
    let mut b = a.clone();
    b.content_shift = ContentShift::opposite(0.2);
    let r = compare_audit(
        &AuditManifest::for_scenario(a),
        &AuditManifest::for_scenario(b),
    )
    .unwrap();
    for scope in ["P", "P-bar"] {
        let m = r.scopes[scope].distribution.magnitude;
        assert!((m - 0.2).abs() < 0.02, "{scope}: {m}");
    }
    assert!(r.scopes["all"].distribution.magnitude < 0.02);
}

#[test]
fn compare_disjoint_batteries_is_input_error() {
    let a = small(9, 0.0);
    let mut b = a.clone();
    b.queries = vec![QuerySpec {
        query_id: "elsewhere".into(),
        ground_truth: GroundTruth::from_vector(&b.attribute, &[0.5, 0.5]).unwrap(),
    }];
    let err = compare_audit(
        &AuditManifest::for_scenario(a),
        &AuditManifest::for_scenario(b),
    )
    .unwrap_err();
    assert!(matches!(err, BiasError::Input(_)), "{err}");
}

#[test]
fn relative_paths_resolve_against_the_manifest() {
    let dir = TempDir::new().unwrap();
    let mut m = exported(&dir, &small(10, 0.0));
    m.config.dr_kind = ListDistanceKind::Rbo;
    let data = load_audit_data(&m).unwrap();
    assert_eq!(data.input.profiles().len(), 40);
    assert_eq!(data.input.queries().len(), 2);
    assert!(data.input.has_ground_truth());
}
