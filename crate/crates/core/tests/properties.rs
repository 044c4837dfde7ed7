mod common;

use std::collections::{BTreeMap, BTreeSet};

use biasmeter::aggregation::{aggregate, kemeny_exact, kemeny_score, Aggregator, ListCollection};
use biasmeter::io::{read_result_lists, write_result_lists};
use biasmeter::measures::{
    combined_bias, content_bias, echo_chamber_test, evaluate, individual_user_bias,
    probabilistic_group_bias, AuditInput, ClassSide, Measure, MeasureConfig, ProtectedClass,
    QueryAggregation, Subject,
};
use biasmeter::ranking::{
    attribute_distribution, distribution_distance, kendall_distance, rbo_distance,
    topk_overlap_distance, user_distance, AttrValue, AttributeSchema, GroundTruth,
    ListDistanceKind, RankedList, RelevantAttribute, ResultItem, UserProfile, Weighting,
};
use biasmeter::rng::SimRng;
use biasmeter::simulator::{simulate, uniform_battery, ContentShift, ScenarioConfig};
use biasmeter::stats::{bootstrap_ci, permutation_test};
use common::*;
use proptest::prelude::*;

/// Rank-biased overlap by its defining series: agreement `|A_d ∩ B_d| / d`
/// at every depth, extrapolated past the shorter list.
fn rbo_oracle(a: &[String], b: &[String], p: f64) -> f64 {
    let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let (sl, ll) = (s.len(), l.len());
    if ll == 0 {
        return 1.0;
    }
    if sl == 0 {
        return 0.0;
    }
    let overlap = |d: usize| -> usize {
        let sa: BTreeSet<&String> = s.iter().take(d).collect();
        let sb: BTreeSet<&String> = l.iter().take(d).collect();
        sa.intersection(&sb).count()
    };
    let xs = overlap(sl) as f64;
    let xl = overlap(ll) as f64;
    let mut sum = 0.0;
    for d in 1..=ll {
        sum += overlap(d) as f64 / d as f64 * p.powi(d as i32);
    }
    for d in sl + 1..=ll {
        sum += xs * (d - sl) as f64 / (sl * d) as f64 * p.powi(d as i32);
    }
    (1.0 - p) / p * sum + ((xl - xs) / ll as f64 + xs / sl as f64) * p.powi(ll as i32)
}

fn ids_strategy(pool: usize, max_depth: usize) -> impl Strategy<Value = Vec<String>> {
    proptest::sample::subsequence(names(pool), 0..=max_depth).prop_shuffle()
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Vec<String>> {
    Just(names(n)).prop_shuffle()
}

fn stance() -> AttributeSchema {
    AttributeSchema::differentiating("stance", &["pro", "con"]).unwrap()
}

fn two_item(query: &str, user: &str, id: &str, p: f64) -> RankedList {
    let w = BTreeMap::from([("pro".to_string(), p), ("con".to_string(), 1.0 - p)]);
    let item = ResultItem::new(id, BTreeMap::from([("stance".to_string(), w)])).unwrap();
    RankedList::new(query, user, vec![item]).unwrap()
}

/// A random population: alternating classes, a categorical and a numeric
/// attribute, and fully annotated lists from an 8-item pool per query.
fn population(seed: u64, n_users: usize, n_queries: usize, cfg: MeasureConfig) -> AuditInput {
    let mut rng = SimRng::new(seed, 0);
    let mut profiles = Vec::new();
    let mut lists = Vec::new();
    for u in 0..n_users {
        let user = format!("u{u:02}");
        let group = if u % 2 == 0 { "f" } else { "m" };
        let other = BTreeMap::from([
            (
                "region".to_string(),
                AttrValue::from(["n", "s"][rng.below(2) as usize]),
            ),
            ("age".to_string(), AttrValue::from(rng.uniform() * 50.0)),
        ]);
        profiles.push(
            UserProfile::new(
                &user,
                BTreeMap::from([("group".to_string(), group.into())]),
                other,
            )
            .unwrap(),
        );
        for q in 0..n_queries {
            let depth = 1 + rng.below(5) as usize;
            let ids = random_ids(&mut rng, 8, depth);
            let list = annotated_list(&mut rng, &ids, "stance", &["pro", "con"]);
            lists.push(RankedList::new(format!("q{q}"), &user, list.items().to_vec()).unwrap());
        }
    }
    AuditInput::new(
        profiles,
        lists,
        ProtectedClass::new("group", "f"),
        stance(),
        cfg,
    )
    .unwrap()
}

fn relevant() -> Vec<RelevantAttribute> {
    vec![
        RelevantAttribute::categorical("region"),
        RelevantAttribute::numeric("age", 50.0),
    ]
}

fn with_truth(input: AuditInput, pro: f64) -> AuditInput {
    input
        .with_ground_truth(GroundTruth::from_vector(&stance(), &[pro, 1.0 - pro]).unwrap())
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kendall_matches_pair_counting(a in ids_strategy(10, 8), b in ids_strategy(10, 8)) {
        prop_assert_eq!(kendall_distance(&list_of(&a), &list_of(&b)), kendall_oracle(&a, &b));
    }

    #[test]
    fn rbo_matches_series(a in ids_strategy(10, 8), b in ids_strategy(10, 8), p in 0.05f64..0.95) {
        let got = rbo_distance(&list_of(&a), &list_of(&b), p).unwrap();
        let want = (1.0 - rbo_oracle(&a, &b, p)).clamp(0.0, 1.0);
        prop_assert!((got - want).abs() < 1e-12, "{} vs {}", got, want);
    }

    #[test]
    fn list_distances_are_symmetric_and_bounded(
        a in ids_strategy(10, 8),
        b in ids_strategy(10, 8),
        p in 0.05f64..0.95,
        k in 1usize..10,
    ) {
        let (la, lb) = (list_of(&a), list_of(&b));
        let ds = [
            (kendall_distance(&la, &lb), kendall_distance(&lb, &la), kendall_distance(&la, &la)),
            (
                rbo_distance(&la, &lb, p).unwrap(),
                rbo_distance(&lb, &la, p).unwrap(),
                rbo_distance(&la, &la, p).unwrap(),
            ),
            (
                topk_overlap_distance(&la, &lb, k).unwrap(),
                topk_overlap_distance(&lb, &la, k).unwrap(),
                topk_overlap_distance(&la, &la, k).unwrap(),
            ),
        ];
        for (ab, ba, aa) in ds {
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(aa, 0.0);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn kendall_triangle_on_permutations(
        a in perm_strategy(7),
        b in perm_strategy(7),
        c in perm_strategy(7),
    ) {
        let (la, lb, lc) = (list_of(&a), list_of(&b), list_of(&c));
        let ab = kendall_distance(&la, &lb);
        let bc = kendall_distance(&lb, &lc);
        let ac = kendall_distance(&la, &lc);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn distribution_sums_to_one(
        seed in any::<u64>(),
        depth in 1usize..10,
        bare in 0usize..4,
        k in 1usize..12,
        discounted in any::<bool>(),
    ) {
        let mut rng = SimRng::new(seed, 0);
        let ids = random_ids(&mut rng, 12, depth);
        let mut items = annotated_list(&mut rng, &ids, "stance", &["pro", "con"]).items().to_vec();
        for i in 0..bare.min(items.len()) {
            items[i] = ResultItem::bare(items[i].item_id()).unwrap();
        }
        let list = RankedList::new("q", "u", items).unwrap();
        let w = if discounted { Weighting::RankDiscounted } else { Weighting::Uniform };
        let d = attribute_distribution(&list, &stance(), k, w).unwrap();
        let total: f64 = d.probabilities().iter().sum::<f64>() + d.unannotated();
        prop_assert!((total - 1.0).abs() < 1e-9);

        // Relabeling the value order permutes the probabilities the same way.
        let flipped = AttributeSchema::differentiating("stance", &["con", "pro"]).unwrap();
        let f = attribute_distribution(&list, &flipped, k, w).unwrap();
        prop_assert_eq!(f.get("pro"), d.get("pro"));
        prop_assert_eq!(f.get("con"), d.get("con"));
    }

    #[test]
    fn distribution_distance_zero_iff_equal(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        let a = attribute_distribution(&two_item("q", "u", "x", p), &stance(), 1, Weighting::Uniform).unwrap();
        let b = attribute_distribution(&two_item("q", "u", "x", q), &stance(), 1, Weighting::Uniform).unwrap();
        let d = distribution_distance(&a, &b).unwrap();
        prop_assert!((d - (p - q).abs()).abs() < 1e-12);
        prop_assert_eq!(d == 0.0, p == q);
    }

    #[test]
    fn user_distance_symmetric_and_blind_to_protected(seed in any::<u64>()) {
        let input = population(seed, 4, 1, MeasureConfig::default());
        let ps = input.profiles();
        let rel = relevant();
        let d01 = user_distance(&ps[0], &ps[1], &rel).unwrap();
        prop_assert_eq!(d01, user_distance(&ps[1], &ps[0], &rel).unwrap());
        prop_assert!((0.0..=1.0).contains(&d01));
        prop_assert_eq!(user_distance(&ps[2], &ps[2], &rel).unwrap(), 0.0);
        let relabeled = UserProfile::new(
            ps[0].user_id(),
            BTreeMap::from([("group".to_string(), AttrValue::from("x"))]),
            ps[0].other().clone(),
        )
        .unwrap();
        prop_assert_eq!(d01, user_distance(&relabeled, &ps[1], &rel).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kemeny_is_optimal(n in 2usize..=7, seed in any::<u64>(), n_lists in 1usize..=5) {
        let mut rng = SimRng::new(seed, 0);
        let lists: Vec<RankedList> = (0..n_lists)
            .map(|_| {
                let mut ids = names(n);
                rng.shuffle(&mut ids);
                list_of(&ids)
            })
            .collect();
        let c = ListCollection::new("c", lists);
        let best = permutations(&names(n))
            .iter()
            .map(|p| kemeny_score(&c, &list_of(p)))
            .fold(f64::INFINITY, f64::min);
        let k = kemeny_exact(&c).unwrap();
        prop_assert_eq!(kemeny_score(&c, &k), best);
        let borda = aggregate(&c, Aggregator::Borda, n).unwrap();
        prop_assert!(kemeny_score(&c, &borda) <= 5.0 * best);
    }

    #[test]
    fn aggregators_respect_unanimity(ids in ids_strategy(10, 8), copies in 1usize..5, k in 1usize..10) {
        prop_assume!(!ids.is_empty());
        let c = ListCollection::new("c", vec![list_of(&ids); copies]);
        let want: Vec<&str> = ids.iter().take(k).map(String::as_str).collect();
        for m in [Aggregator::Borda, Aggregator::Median, Aggregator::Kemeny] {
            let out = aggregate(&c, m, k).unwrap();
            prop_assert_eq!(out.item_ids().collect::<Vec<_>>(), want.clone());
        }
    }

    #[test]
    fn borda_is_neutral_without_ties(seed in any::<u64>(), n in 3usize..8, n_lists in 1usize..6) {
        let mut rng = SimRng::new(seed, 0);
        let lists: Vec<Vec<String>> = (0..n_lists)
            .map(|_| {
                let mut ids = names(n);
                rng.shuffle(&mut ids);
                ids
            })
            .collect();
        let mut score: BTreeMap<&String, usize> = BTreeMap::new();
        for l in &lists {
            for (r, id) in l.iter().enumerate() {
                *score.entry(id).or_default() += n - r;
            }
        }
        let distinct: BTreeSet<usize> = score.values().copied().collect();
        prop_assume!(distinct.len() == n);

        let mut relabel = names(n);
        rng.shuffle(&mut relabel);
        let map: BTreeMap<String, String> = names(n).into_iter().zip(relabel).collect();
        let renamed: Vec<Vec<String>> = lists
            .iter()
            .map(|l| l.iter().map(|x| map[x].clone()).collect())
            .collect();
        let agg = |ls: &[Vec<String>]| -> Vec<String> {
            let c = ListCollection::new("c", ls.iter().map(|l| list_of(l)).collect());
            aggregate(&c, Aggregator::Borda, n).unwrap().item_ids().map(String::from).collect()
        };
        let expected: Vec<String> = agg(&lists).iter().map(|x| map[x].clone()).collect();
        prop_assert_eq!(agg(&renamed), expected);
    }

    #[test]
    fn individual_bias_is_monotone_in_list_distance(
        age_a in 0.0f64..50.0,
        age_b in 0.0f64..50.0,
        a in perm_strategy(6),
        b1 in perm_strategy(6),
        b2 in perm_strategy(6),
    ) {
        let (near, far) = {
            let (d1, d2) = (kendall_oracle(&a, &b1), kendall_oracle(&a, &b2));
            if d1 <= d2 { (b1, b2) } else { (b2, b1) }
        };
        let run = |other: &[String]| {
            let profiles = vec![
                UserProfile::new("a", BTreeMap::from([("group".into(), "f".into())]),
                    BTreeMap::from([("age".into(), AttrValue::from(age_a))])).unwrap(),
                UserProfile::new("b", BTreeMap::from([("group".into(), "m".into())]),
                    BTreeMap::from([("age".into(), AttrValue::from(age_b))])).unwrap(),
            ];
            let lists = vec![
                RankedList::from_ids("q", "a", &a).unwrap(),
                RankedList::from_ids("q", "b", other).unwrap(),
            ];
            let cfg = MeasureConfig {
                relevant_attributes: vec![RelevantAttribute::numeric("age", 50.0)],
                ..MeasureConfig::default()
            };
            let input = AuditInput::new(profiles, lists, ProtectedClass::new("group", "f"), stance(), cfg).unwrap();
            individual_user_bias(&input).unwrap().magnitude
        };
        let (m_near, m_far) = (run(&near), run(&far));
        prop_assert!(m_far >= m_near);
        let du = (age_a - age_b).abs() / 50.0;
        let want = (kendall_oracle(&a, &far) - du).max(0.0);
        prop_assert!((m_far - want).abs() < 1e-9 || (want < 1e-9 && m_far == 0.0));
    }

    #[test]
    fn combined_bias_symmetric_and_zero_on_itself(seed in any::<u64>(), n in 4usize..12, mean in any::<bool>()) {
        let cfg = MeasureConfig {
            query_aggregation: if mean { QueryAggregation::Mean } else { QueryAggregation::Max },
            ..MeasureConfig::default()
        };
        let input = population(seed, n, 2, cfg);
        let p = Subject::Class(ClassSide::Protected);
        let q = Subject::Class(ClassSide::Unprotected);
        let pq = combined_bias(&input, &p, &q).unwrap().magnitude;
        prop_assert_eq!(pq, combined_bias(&input, &q, &p).unwrap().magnitude);
        prop_assert_eq!(combined_bias(&input, &p, &p).unwrap().magnitude, 0.0);
        let u = Subject::User("u01".into());
        prop_assert_eq!(combined_bias(&input, &u, &u).unwrap().magnitude, 0.0);
    }

    #[test]
    fn combined_bias_two_values_is_abs_difference(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        let input = population(0, 2, 1, MeasureConfig::default());
        let a = Subject::List(two_item("q0", "u00", "x", p));
        let b = Subject::List(two_item("q0", "u01", "y", q));
        let m = combined_bias(&input, &a, &b).unwrap().magnitude;
        prop_assert!((m - (p - q).abs()).abs() < 1e-12);
    }

    #[test]
    fn content_bias_ignores_order_within_top_k(seed in any::<u64>(), pro in 0.0f64..=1.0) {
        let input = with_truth(population(seed, 2, 1, MeasureConfig::default()), pro);
        let list = input.list("u00", "q0").unwrap().clone();
        let mut items = list.items().to_vec();
        SimRng::new(seed, 1).shuffle(&mut items);
        let shuffled = RankedList::new("q0", "u00", items).unwrap();
        let a = content_bias(&input, &Subject::List(list)).unwrap().magnitude;
        let b = content_bias(&input, &Subject::List(shuffled)).unwrap().magnitude;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn echo_never_flags_within_content_threshold(
        seed in any::<u64>(),
        n in 4usize..14,
        pro in 0.2f64..0.8,
        eps in 0.0f64..0.5,
        mean in any::<bool>(),
    ) {
        let cfg = MeasureConfig {
            epsilon: Some(eps),
            query_aggregation: if mean { QueryAggregation::Mean } else { QueryAggregation::Max },
            ..MeasureConfig::default()
        };
        let input = with_truth(population(seed, n, 2, cfg), pro);
        let echo = echo_chamber_test(&input).unwrap();
        let cp = content_bias(&input, &Subject::Class(ClassSide::Protected)).unwrap().magnitude;
        let cq = content_bias(&input, &Subject::Class(ClassSide::Unprotected)).unwrap().magnitude;
        if cp <= eps && cq <= eps {
            prop_assert!(!echo.flagged);
        }
    }

    #[test]
    fn probabilistic_bias_in_unit_interval(seed in any::<u64>(), n in 2usize..16, kind in 0usize..4) {
        let dr_kind = [
            ListDistanceKind::Kendall,
            ListDistanceKind::Rbo,
            ListDistanceKind::TopK,
            ListDistanceKind::Attribute,
        ][kind];
        let input = population(seed, n, 2, MeasureConfig { dr_kind, ..MeasureConfig::default() });
        let m = probabilistic_group_bias(&input).unwrap().magnitude;
        prop_assert!((0.0..=1.0).contains(&m));
    }

    #[test]
    fn loader_accepts_what_the_writer_emits(seed in any::<u64>(), n in 1usize..6, queries in 1usize..4) {
        let input = population(seed, n, queries, MeasureConfig::default());
        let mut buf = Vec::new();
        write_result_lists(&mut buf, input.lists().values()).unwrap();
        let back = read_result_lists(buf.as_slice(), "mem").unwrap();
        prop_assert!(back.warnings.is_empty());
        prop_assert_eq!(&back.lists, input.lists());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn p_value_bounds(seed in any::<u64>(), n in 4usize..16) {
        let input = population(seed, n, 2, MeasureConfig::default());
        for m in [Measure::GroupUserBias, Measure::CombinedClassBias, Measure::ProbabilisticGroupBias] {
            let r = permutation_test(&input, m, 100, seed).unwrap();
            prop_assert!(r.p_value >= 1.0 / 101.0 && r.p_value <= 1.0);
            prop_assert_eq!(r, permutation_test(&input, m, 100, seed).unwrap());
        }
    }

    // Over simulated populations with a content shift the statistic is a
    // smooth function of class frequencies, and the percentile interval
    // brackets the full-data estimate.
    #[test]
    fn bootstrap_interval_contains_estimate(
        seed in any::<u64>(),
        delta in 0.05f64..0.2,
        level in 0.5f64..0.99,
    ) {
        let mut cfg = ScenarioConfig::new(200, seed);
        cfg.queries = uniform_battery(&cfg.attribute, 1);
        cfg.content_shift = ContentShift::opposite(delta);
        let input = simulate(&cfg).unwrap().audit_input(&cfg, MeasureConfig::default()).unwrap();
        let est = evaluate(&input, Measure::CombinedClassBias).unwrap().magnitude;
        let (lo, hi) = bootstrap_ci(&input, Measure::CombinedClassBias, 200, level, seed).unwrap();
        prop_assert!(lo <= est && est <= hi, "{} not in [{}, {}]", est, lo, hi);
    }
}

#[test]
fn identical_lists_give_p_value_one_and_flat_interval() {
    let base = population(7, 10, 2, MeasureConfig::default());
    let same: Vec<RankedList> = base
        .lists()
        .values()
        .map(|l| {
            let template = base.list("u00", l.query_id()).unwrap();
            RankedList::new(l.query_id(), l.user_id(), template.items().to_vec()).unwrap()
        })
        .collect();
    let input = with_truth(
        AuditInput::new(
            base.profiles().to_vec(),
            same,
            ProtectedClass::new("group", "f"),
            stance(),
            MeasureConfig::default(),
        )
        .unwrap(),
        0.5,
    );
    for m in [
        Measure::GroupUserBias,
        Measure::ProbabilisticGroupBias,
        Measure::CombinedClassBias,
        Measure::EchoChamber,
    ] {
        let r = permutation_test(&input, m, 200, 3).unwrap();
        assert_eq!(r.observed, 0.0, "{m:?}");
        assert_eq!(r.p_value, 1.0, "{m:?}");
    }
    for m in [Measure::CombinedClassBias, Measure::ContentBiasProtected] {
        let (lo, hi) = bootstrap_ci(&input, m, 200, 0.95, 3).unwrap();
        assert_eq!(lo, hi, "{m:?}");
    }
}
