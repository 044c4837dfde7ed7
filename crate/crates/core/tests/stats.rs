use biasmeter::measures::{evaluate, AuditInput, Measure, MeasureConfig};
use biasmeter::simulator::{simulate, uniform_battery, ContentShift, ScenarioConfig};
use biasmeter::stats::{bootstrap_ci, permutation_test, permutation_tests, MIN_REPLICATES};
use biasmeter::BiasError;

fn scenario(n_users: usize, seed: u64, delta: f64) -> (ScenarioConfig, AuditInput) {
    let mut cfg = ScenarioConfig::new(n_users, seed);
    cfg.queries = uniform_battery(&cfg.attribute, 1);
    cfg.content_shift = ContentShift::opposite(delta);
    let input = simulate(&cfg)
        .unwrap()
        .audit_input(&cfg, MeasureConfig::default())
        .unwrap();
    (cfg, input)
}

#[test]
fn argument_errors() {
    let (_, input) = scenario(20, 1, 0.0);
    assert!(matches!(
        permutation_test(&input, Measure::GroupUserBias, MIN_REPLICATES - 1, 0),
        Err(BiasError::Parameter(_))
    ));
    assert!(matches!(
        permutation_test(&input, Measure::IndividualUserBias, 200, 0),
        Err(BiasError::Parameter(_))
    ));
    assert!(matches!(
        permutation_test(&input, Measure::ContentBiasProtected, 200, 0),
        Err(BiasError::Parameter(_))
    ));
    for level in [0.0, 1.0, -0.5, f64::NAN] {
        assert!(matches!(
            bootstrap_ci(&input, Measure::CombinedClassBias, 200, level, 0),
            Err(BiasError::Parameter(_))
        ));
    }
    let (_, tiny) = scenario(4, 1, 0.0);
    assert!(matches!(
        bootstrap_ci(&tiny, Measure::CombinedClassBias, 200, 0.95, 0),
        Err(BiasError::SmallSample(_))
    ));
}

#[test]
fn results_depend_only_on_seed() {
    let (_, input) = scenario(40, 2, 0.05);
    let a = permutation_test(&input, Measure::CombinedClassBias, 300, 9).unwrap();
    let b = permutation_test(&input, Measure::CombinedClassBias, 300, 9).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let c = pool.install(|| permutation_test(&input, Measure::CombinedClassBias, 300, 9).unwrap());
    assert_eq!(a, c);
    let ci = bootstrap_ci(&input, Measure::GroupUserBias, 300, 0.9, 4).unwrap();
    let ci3 = pool.install(|| bootstrap_ci(&input, Measure::GroupUserBias, 300, 0.9, 4).unwrap());
    assert_eq!(ci, ci3);
    let other = permutation_test(&input, Measure::CombinedClassBias, 300, 10).unwrap();
    assert_ne!(a.null_summary, other.null_summary);
}

#[test]
fn joint_tests_equal_single_tests() {
    let (_, input) = scenario(30, 5, 0.1);
    let measures = [
        Measure::GroupUserBias,
        Measure::ProbabilisticGroupBias,
        Measure::CombinedClassBias,
        Measure::EchoChamber,
    ];
    let joint = permutation_tests(&input, &measures, 150, 2).unwrap();
    for (m, r) in measures.iter().zip(joint) {
        assert_eq!(r, permutation_test(&input, *m, 150, 2).unwrap());
    }
}

#[test]
fn p_value_follows_add_one_rule() {
    let (_, input) = scenario(40, 3, 0.0);
    let r = permutation_test(&input, Measure::GroupUserBias, 199, 1).unwrap();
    let scaled = r.p_value * 200.0;
    assert!((scaled - scaled.round()).abs() < 1e-9);
    assert!(r.p_value >= 1.0 / 200.0 && r.p_value <= 1.0);
    assert_eq!(r.n_permutations, 199);
    assert_eq!(r.seed, 1);
    let q = &r.null_summary.quantiles;
    assert!(
        q["q05"] <= q["q25"]
            && q["q25"] <= q["q50"]
            && q["q50"] <= q["q75"]
            && q["q75"] <= q["q95"]
    );
}

#[test]
fn strong_shift_is_significant() {
    let (_, input) = scenario(200, 4, 0.2);
    let r = permutation_test(&input, Measure::CombinedClassBias, 200, 0).unwrap();
    assert_eq!(r.p_value, 1.0 / 201.0);
}

// A +/-0.1 shift puts the combined bias of the class representatives at 0.2;
// the 95% interval should cover it in at least 90 of 100 simulated audits.
#[test]
fn bootstrap_coverage_of_injected_shift() {
    let truth = 0.2;
    let covered = (0..100)
        .filter(|&t| {
            let (_, input) = scenario(200, 1000 + t, 0.1);
            let (lo, hi) = bootstrap_ci(&input, Measure::CombinedClassBias, 200, 0.95, t).unwrap();
            lo <= truth && truth <= hi
        })
        .count();
    assert!(covered >= 90, "covered {covered}/100");
}

#[test]
fn interval_brackets_estimate_for_shifted_content() {
    let (_, input) = scenario(200, 8, 0.1);
    let est = evaluate(&input, Measure::ContentBiasProtected)
        .unwrap()
        .magnitude;
    let (lo, hi) = bootstrap_ci(&input, Measure::ContentBiasProtected, 400, 0.9, 8).unwrap();
    assert!(lo < est && est < hi, "{est} not in [{lo}, {hi}]");
}
