mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use yada_core::datatree::{LeafRef, UpdateOutcome};
use yada_core::ingest::{sample_rows, schedule};
use yada_core::pathsel::{bind, evaluate, project, SelectionSet};
use yada_core::twinsync::sync_counts;
use yada_core::{diff, parse_schema, print_schema, DataTree, LeafPath, Value};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_selection(r: &mut ChaCha8Rng, schema: &yada_core::SchemaModule, tree: &DataTree) -> SelectionSet {
    let mut sel = SelectionSet::new("s");
    for _ in 0..r.gen_range(0..4) {
        sel.insert(random_expr(r, schema, tree));
    }
    sel
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn schema_round_trip(seed in any::<u64>()) {
        let m = random_schema(&mut rng(seed), 4, 40);
        prop_assert!(count_nodes(&m.roots) <= 40);
        prop_assert!(depth(&m.roots) <= 4);
        let text = print_schema(&m);
        let back = parse_schema(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(print_schema(&back), text);
    }

    #[test]
    fn evaluate_matches_brute_force(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = Arc::new(random_schema(&mut r, 4, 30));
        let tree = random_tree(&mut r, &schema, 25);
        let expr = random_expr(&mut r, &schema, &tree);
        if expr.segments.is_empty() {
            return Ok(());
        }
        let bound = bind(&expr, &schema).map_err(|e| TestCaseError::fail(format!("{e}: {expr}")))?;
        // same leaves, same document order
        prop_assert_eq!(evaluate(&tree, &bound), brute_force_match(&tree, &expr), "{}", expr);
    }

    #[test]
    fn last_writer_wins_matches_fold(writes in prop::collection::vec((0u64..20, -100i64..100), 1..30)) {
        let schema = air_quality();
        let path: LeafPath = "/AirGasesURI/value/ozone".parse().unwrap();
        let mut tree = DataTree::new(Arc::clone(&schema));
        let mut dropped = 0;
        for &(ts, v) in &writes {
            let value = Value::Num(yada_core::Decimal::from_int(v).unwrap());
            if tree.apply_update(&path, value, ts).unwrap() == UpdateOutcome::Dropped {
                dropped += 1;
            }
        }
        // oracle: newest timestamp wins, later write wins ties
        let (best_ts, best_v) = writes
            .iter()
            .fold((0u64, None), |(bt, bv), &(ts, v)| if bv.is_none() || ts >= bt { (ts, Some(v)) } else { (bt, bv) });
        let expected_dropped = writes
            .iter()
            .scan(None::<u64>, |max, &(ts, _)| {
                let stale = max.is_some_and(|m| ts < m);
                *max = Some(max.map_or(ts, |m| m.max(ts)));
                Some(stale)
            })
            .filter(|&s| s)
            .count();
        match tree.get(&path).unwrap() {
            LeafRef::Leaf(l) => {
                prop_assert_eq!(l.last_updated, best_ts);
                prop_assert_eq!(&l.value, &Value::Num(yada_core::Decimal::from_int(best_v.unwrap()).unwrap()));
            }
            LeafRef::LeafList(_) => prop_assert!(false),
        }
        prop_assert_eq!(dropped, expected_dropped);
    }

    #[test]
    fn diff_properties(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = Arc::new(random_schema(&mut r, 3, 20));
        let a = random_tree(&mut r, &schema, 15);
        let b = random_tree(&mut r, &schema, 15);
        let ab = diff(&a, &b).unwrap();
        prop_assert_eq!(&ab, &diff(&b, &a).unwrap());
        prop_assert!(diff(&a, &a).unwrap().is_empty());
        // oracle: empty diff exactly when the canonical encodings agree
        prop_assert_eq!(ab.is_empty(), a.serialize() == b.serialize());
        // oracle: brute-force comparison of leaf maps rendered as text
        let render = |t: &DataTree| -> BTreeMap<String, String> {
            t.leaves().into_iter().map(|(p, v)| (p.to_string(), v.to_string())).collect()
        };
        let (ra, rb) = (render(&a), render(&b));
        let keys: BTreeSet<&String> = ra.keys().chain(rb.keys()).collect();
        let expected: BTreeSet<String> = keys.into_iter().filter(|k| ra.get(*k) != rb.get(*k)).cloned().collect();
        let got: BTreeSet<String> = ab.iter().map(|p| p.to_string()).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn generated_trees_validate_and_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = Arc::new(random_schema(&mut r, 4, 30));
        let t = random_tree(&mut r, &schema, 30);
        prop_assert!(t.validate().is_valid(), "{:?}", t.validate());
        let back = DataTree::from_json(Arc::clone(&schema), &t.to_json()).unwrap();
        prop_assert!(diff(&t, &back).unwrap().is_empty());
        prop_assert_eq!(back.to_json(), t.to_json());
    }

    #[test]
    fn projection_properties(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = Arc::new(random_schema(&mut r, 4, 30));
        let t = random_tree(&mut r, &schema, 25);
        let small = random_selection(&mut r, &schema, &t);
        let mut big = small.clone();
        big.insert(random_expr(&mut r, &schema, &t));
        let (bs, bb) = (small.bind(&schema).unwrap(), big.bind(&schema).unwrap());
        let p = project(&t, &bs);
        prop_assert!(p.validate().is_valid());
        prop_assert_eq!(project(&p, &bs).to_json(), p.to_json());
        prop_assert!(p.serialize().len() <= project(&t, &bb).serialize().len());
        let before: BTreeSet<_> = bs.evaluate(&t).into_iter().collect();
        let after: BTreeSet<_> = bs.evaluate(&p).into_iter().collect();
        prop_assert_eq!(before, after);
        prop_assert!(p.serialize().len() <= t.serialize().len());
    }

    #[test]
    fn sync_counts_match_diff_oracle(seed in any::<u64>(), window in 0u64..100, now in 0u64..200) {
        let mut r = rng(seed);
        let schema = Arc::new(random_schema(&mut r, 3, 25));
        let physical = random_tree(&mut r, &schema, 20);
        let mut twin = physical.clone();
        for _ in 0..r.gen_range(0..10) {
            if let Some((p, ty, k)) = random_leaf_path(&mut r, &schema) {
                let v = k.unwrap_or_else(|| random_value(&mut r, ty.value_kind()));
                twin.apply_update(&p, v, r.gen_range(0..150)).unwrap();
            }
        }
        let sel = random_selection(&mut r, &schema, &physical);
        let bound = sel.bind(&schema).unwrap();
        let counts = sync_counts(&physical, &twin, &bound, window, now);

        let selected: BTreeSet<LeafPath> = sel.exprs().iter().flat_map(|e| brute_force_match(&physical, e)).collect();
        let differing = diff(&physical, &twin).unwrap();
        let floor = now.saturating_sub(window);
        let matched = selected
            .iter()
            .filter(|p| !differing.contains(*p))
            .filter(|p| twin.get(p).unwrap().last_updated().is_none_or(|ts| ts >= floor))
            .count();
        prop_assert_eq!(counts.considered, selected.len());
        prop_assert_eq!(counts.matched, matched);
        let s = counts.score();
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn sampling_properties(available in 1usize..500, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let used = ((available as f64) * frac) as usize;
        let rows = sample_rows(available, used, seed);
        prop_assert_eq!(rows.len(), used.min(available));
        prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(rows.iter().all(|&i| i < available));
    }

    #[test]
    fn schedule_properties(n in 0usize..300, gap in 1u64..200, seed in any::<u64>()) {
        let readings: Vec<_> = (0..n)
            .map(|i| yada_core::ingest::SensorReading {
                sensor_id: format!("s{i}"),
                path: "/AirHumidityURI/value".parse().unwrap(),
                value: Value::Num(yada_core::Decimal::from_int(i as i64).unwrap()),
                ts: 0,
            })
            .collect();
        let s = schedule(readings, gap, seed).unwrap();
        prop_assert_eq!(s.len(), n);
        for (i, e) in s.events.iter().enumerate() {
            let lo = i as u64 * gap;
            prop_assert!(e.ts >= lo && e.ts <= lo + gap / 4);
        }
        prop_assert_eq!(s.horizon_ms, s.events.last().map_or(0, |e| e.ts));
    }
}

#[test]
fn generators_reach_non_trivial_cases() {
    let (mut nonempty, mut with_pred, mut with_wild) = (0, 0, 0);
    for seed in 0..300 {
        let mut r = rng(seed);
        let schema = Arc::new(random_schema(&mut r, 4, 30));
        let tree = random_tree(&mut r, &schema, 25);
        let expr = random_expr(&mut r, &schema, &tree);
        if !brute_force_match(&tree, &expr).is_empty() {
            nonempty += 1;
        }
        if expr.segments.iter().any(|s| s.predicate.is_some()) {
            with_pred += 1;
        }
        if expr.to_string().contains('*') {
            with_wild += 1;
        }
    }
    assert!(nonempty >= 100, "{nonempty}");
    assert!(with_pred >= 30, "{with_pred}");
    assert!(with_wild >= 30, "{with_wild}");
}
