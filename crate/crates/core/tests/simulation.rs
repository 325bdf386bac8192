mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::air_quality;
use yada_core::ingest::{schedule, SensorReading};
use yada_core::pathsel::kpi_airquality;
use yada_core::twinsync::{check_comparable, compare, run, EventKind, Mode, SimConfig, SimError};
use yada_core::{Decimal, Value};

fn replay(n: usize, gap: u64, seed: u64) -> Arc<yada_core::ingest::ReplaySchedule> {
    let schema = air_quality();
    let leaves = schema.leaf_paths();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let readings = (0..n)
        .filter_map(|i| {
            let names = &leaves[r.gen_range(0..leaves.len())];
            // the particle list needs a key; keep to plain leaves here
            if names[0] == "AirParticleURI" {
                return None;
            }
            Some(SensorReading {
                sensor_id: format!("s{i}"),
                path: format!("/{}", names.join("/")).parse().unwrap(),
                value: Value::Num(Decimal::from_micros(r.gen_range(0..5) * 500_000)),
                ts: 0,
            })
        })
        .collect();
    Arc::new(schedule(readings, gap, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn run_invariants(
        nodes in 1usize..10,
        batch in 1usize..24,
        flush in 1u64..80,
        poll in 5u64..150,
        gap in 1u64..40,
        with in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut c = SimConfig::new(air_quality(), kpi_airquality(), replay(300, gap, seed));
        c.num_nodes = nodes;
        c.gateway_batch_size = batch;
        c.gateway_flush_ms = flush;
        c.monitor_poll_ms = poll;
        c.mode = if with { Mode::WithYada } else { Mode::WithoutYada };
        c.seed = seed;
        let (m, log) = run(&c).unwrap();
        let s = &m.summary;
        prop_assert_eq!(s.applied + s.dropped, s.scheduled);
        prop_assert_eq!(s.scheduled, c.schedule.len());
        // each reading reaches the twin exactly once
        let landed = log.records.iter().filter(|e| matches!(e.kind, EventKind::Apply | EventKind::Drop)).count();
        prop_assert_eq!(landed, s.scheduled);
        prop_assert!(m.sync_series.iter().all(|&(_, v)| (0.0..=1.0).contains(&v)));
        prop_assert!(m.e2e_delays_us.iter().all(|&d| d >= 5_000));
        prop_assert!(m.poll_times_us.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(log.records.windows(2).all(|w| w[0].ts_us <= w[1].ts_us));
        let (m2, log2) = run(&c).unwrap();
        prop_assert_eq!(m.to_csv(), m2.to_csv());
        prop_assert_eq!(log.to_csv(), log2.to_csv());
    }
}

#[test]
fn compare_requires_mode_only_difference() {
    let c = SimConfig::new(air_quality(), kpi_airquality(), replay(50, 10, 1));
    let with = c.with_mode(Mode::WithYada);
    let without = c.with_mode(Mode::WithoutYada);
    check_comparable(&with, &without).unwrap();
    let mut other = without.clone();
    other.seed = 99;
    assert!(matches!(compare(&with, &other), Err(SimError::ConfigMismatch("seed"))));
    let mut other = without.clone();
    other.num_nodes = 7;
    assert!(matches!(compare(&with, &other), Err(SimError::ConfigMismatch("num_nodes"))));
    let row = compare(&with, &without).unwrap();
    assert_eq!(row.num_nodes, 4);
    assert!(row.mean_payload_with < row.mean_payload_without);
}

#[test]
fn idle_nodes_are_harmless() {
    let mut c = SimConfig::new(air_quality(), kpi_airquality(), replay(200, 10, 3));
    c.num_nodes = 16;
    let (m, log) = run(&c).unwrap();
    assert_eq!(m.summary.applied + m.summary.dropped, m.summary.scheduled);
    let emitters: std::collections::BTreeSet<_> = log
        .records
        .iter()
        .filter(|e| e.kind == EventKind::Emit)
        .map(|e| e.node.clone())
        .collect();
    assert!(emitters.len() <= 14);
}
