use std::collections::BTreeMap;

use biasmeter::measures::{evaluate, Measure, MeasureConfig};
use biasmeter::ranking::{
    attribute_distribution, user_distance, AttributeSchema, GroundTruth, Weighting,
};
use biasmeter::rng::SimRng;
use biasmeter::simulator::{
    generate_profiles, generate_queries, serve, simulate, uniform_battery, ContentShift, QuerySpec,
    ScenarioConfig,
};
use biasmeter::BiasError;

fn one_query(n_users: usize, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(n_users, seed);
    cfg.queries = uniform_battery(&cfg.attribute, 1);
    cfg
}

fn combined(cfg: &ScenarioConfig) -> f64 {
    let input = simulate(cfg)
        .unwrap()
        .audit_input(cfg, MeasureConfig::default())
        .unwrap();
    evaluate(&input, Measure::CombinedClassBias)
        .unwrap()
        .magnitude
}

#[test]
fn two_users_are_one_matched_pair() {
    let cfg = ScenarioConfig::new(2, 4);
    let ps = generate_profiles(&cfg).unwrap();
    assert_eq!(ps.len(), 2);
    assert_eq!(ps[0].other(), ps[1].other());
    assert_ne!(ps[0].protected(), ps[1].protected());
}

#[test]
fn classes_have_identical_attribute_distributions() {
    for seed in 0..5 {
        let cfg = ScenarioConfig::new(60, seed);
        let ps = generate_profiles(&cfg).unwrap();
        let class = cfg.protected_class();
        let mut counts: [BTreeMap<String, usize>; 2] = Default::default();
        for p in &ps {
            let side = usize::from(!class.contains(p).unwrap());
            for (k, v) in p.other() {
                *counts[side].entry(format!("{k}={v}")).or_default() += 1;
            }
        }
        assert_eq!(counts[0], counts[1]);
    }
}

#[test]
fn partners_are_at_user_distance_zero() {
    let cfg = ScenarioConfig::new(1000, 8);
    assert_eq!(cfg.other_attributes.len(), 3);
    let ps = generate_profiles(&cfg).unwrap();
    let rel = cfg.relevant_attributes();
    for pair in ps.chunks(2) {
        assert_eq!(user_distance(&pair[0], &pair[1], &rel).unwrap(), 0.0);
    }
}

#[test]
fn query_descriptors_carry_ground_truth() {
    let cfg = one_query(10, 0);
    let qs = generate_queries(&cfg).unwrap();
    assert_eq!(qs.len(), 1);
    assert_eq!(
        qs[0].ground_truth.probabilities(),
        &BTreeMap::from([("con".to_string(), 0.5), ("pro".to_string(), 0.5)])
    );

    let mut cfg = ScenarioConfig::new(10, 0);
    cfg.queries = uniform_battery(&cfg.attribute, 20);
    let a = generate_queries(&cfg).unwrap();
    let b = generate_queries(&cfg).unwrap();
    assert_eq!(a, b);
    let ids: Vec<&str> = a.iter().map(|q| q.query_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert_eq!(ids.len(), 20);
}

#[test]
fn serve_is_deterministic_and_matches_simulate() {
    let mut cfg = ScenarioConfig::new(20, 12);
    cfg.ranking_divergence = 0.5;
    cfg.content_shift = ContentShift::opposite(0.1);
    let sim = simulate(&cfg).unwrap();
    assert_eq!(sim, simulate(&cfg).unwrap());
    let q = &cfg.queries[2].query_id;
    for p in &sim.profiles {
        let served = serve(&cfg, p, q).unwrap();
        assert_eq!(served, serve(&cfg, p, q).unwrap());
        let stored = sim
            .lists
            .iter()
            .find(|l| l.user_id() == p.user_id() && l.query_id() == q)
            .unwrap();
        assert_eq!(&served, stored);
        assert_eq!(served.depth(), cfg.list_depth);
    }
    let mut other = cfg.clone();
    other.seed = 13;
    assert_ne!(sim.lists, simulate(&other).unwrap().lists);
}

#[test]
fn invalid_scenarios_are_rejected() {
    let mut cfg = ScenarioConfig::new(3, 0);
    assert!(matches!(simulate(&cfg), Err(BiasError::Parameter(_))));
    cfg.n_users = 4;
    cfg.list_depth = cfg.item_pool_size + 1;
    assert!(simulate(&cfg).is_err());
    let mut cfg = ScenarioConfig::new(4, 0);
    cfg.ranking_divergence = 1.5;
    assert!(simulate(&cfg).is_err());
    let mut cfg = ScenarioConfig::new(4, 0);
    cfg.content_shift = ContentShift::opposite(0.6);
    assert!(simulate(&cfg).is_err());
}

// With truth (0.5, 0.5) and a +/-0.15 shift on the first value, the classes'
// lists carry (0.65, 0.35) and (0.35, 0.65) on average.
#[test]
fn shifted_classes_average_the_shifted_truth() {
    let mut cfg = one_query(10_000, 21);
    cfg.content_shift = ContentShift::opposite(0.15);
    let sim = simulate(&cfg).unwrap();
    let class = cfg.protected_class();
    let attr = &cfg.attribute;
    let mut sums = [[0.0; 2]; 2];
    let mut counts = [0.0; 2];
    for (p, l) in sim.profiles.iter().zip(&sim.lists) {
        let side = usize::from(!class.contains(p).unwrap());
        let d = attribute_distribution(l, attr, cfg.list_depth, Weighting::Uniform).unwrap();
        for (s, x) in sums[side].iter_mut().zip(d.probabilities()) {
            *s += x;
        }
        counts[side] += 1.0;
    }
    let want = [[0.65, 0.35], [0.35, 0.65]];
    for side in 0..2 {
        for i in 0..2 {
            let got = sums[side][i] / counts[side];
            assert!(
                (got - want[side][i]).abs() < 0.01,
                "class {side} value {i}: {got}"
            );
        }
    }
    assert!((combined(&cfg) - 0.30).abs() < 0.02);
}

#[test]
fn null_scenario_has_no_combined_bias() {
    let cfg = one_query(10_000, 2);
    assert!(combined(&cfg) < 0.02);
}

#[test]
fn combined_bias_grows_with_shift() {
    let mut previous = 0.0;
    for delta in [0.0, 0.05, 0.1, 0.15, 0.2] {
        let mut cfg = one_query(10_000, 30);
        cfg.content_shift = ContentShift::opposite(delta);
        let m = combined(&cfg);
        assert!(m >= previous - 0.02, "delta {delta}: {m} after {previous}");
        assert!((m - 2.0 * delta).abs() < 0.02, "delta {delta}: {m}");
        previous = m;
    }
}

/// Expected Kendall distance between the top-k prefixes of the two class
/// templates, by Monte Carlo over the swap process alone: each of the
/// disjoint adjacent pairs inside the prefix swaps with probability
/// `delta`, and every swap is one discordant pair out of C(k, 2).
fn template_distance_oracle(delta: f64, k: usize, seed: u64) -> f64 {
    let mut rng = SimRng::new(seed, 0);
    let reps = 10_000;
    let pairs = (k * (k - 1) / 2) as f64;
    let total: f64 = (0..reps)
        .map(|_| (0..k / 2).filter(|_| rng.bernoulli(delta)).count() as f64 / pairs)
        .sum();
    total / reps as f64
}

#[test]
fn group_bias_tracks_ranking_divergence() {
    for delta in [0.5, 1.0] {
        let mut cfg = ScenarioConfig::new(10_000, 17);
        cfg.queries = uniform_battery(&cfg.attribute, 20);
        cfg.list_depth = 10;
        cfg.item_pool_size = 20;
        cfg.ranking_divergence = delta;
        let input = simulate(&cfg)
            .unwrap()
            .audit_input(&cfg, MeasureConfig::default())
            .unwrap();
        let got = evaluate(&input, Measure::GroupUserBias).unwrap().magnitude;
        let want = template_distance_oracle(delta, 10, 99);
        assert!((got - want).abs() < 0.05, "delta {delta}: {got} vs {want}");
    }
}

#[test]
fn scenarios_with_several_values_and_custom_truth() {
    let mut cfg = ScenarioConfig::new(40, 3);
    cfg.attribute = AttributeSchema::differentiating("topic", &["a", "b", "c", "d"]).unwrap();
    cfg.queries = vec![QuerySpec {
        query_id: "only".into(),
        ground_truth: GroundTruth::from_vector(&cfg.attribute, &[0.4, 0.3, 0.2, 0.1]).unwrap(),
    }];
    let sim = simulate(&cfg).unwrap();
    assert_eq!(sim.lists.len(), 40);
    let input = sim.audit_input(&cfg, MeasureConfig::default()).unwrap();
    assert!(evaluate(&input, Measure::EchoChamber).is_ok());
}
