// Brute-force oracles index rows and nodes the way the math does.
#![allow(clippy::needless_range_loop)]

use chrono::{Duration, Timelike};
use evacflow::data::{
    clean, demand, drop_sparse_detectors, extract_demand_features, extract_regular_features, flag_outliers,
    generate_synthetic, impute_iterative, ordered_population, parse_timestamp, prepare, regular, split_samples,
    window_samples, CleaningConfig, Dataset, DetectorSeries, FlowScaler, ImputeConfig, PipelineConfig,
    ScenarioConfig, SeriesSet, SplitRatios, Zone, DEMAND_FEATURES, MAX_MISSING, REGULAR_FEATURES,
};
use evacflow::Error;
use numcore::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn series(node_id: usize, flow: Vec<Option<f64>>) -> DetectorSeries {
    let speed = flow.iter().map(|f| f.map(|_| 55.0)).collect();
    DetectorSeries {
        node_id,
        lanes: 2,
        flow,
        speed,
    }
}

fn start() -> chrono::NaiveDateTime {
    parse_timestamp("2017-05-01T00:00:00").unwrap()
}

fn with_missing(hours: usize, missing: usize) -> Vec<Option<f64>> {
    (0..hours).map(|t| if t < missing { None } else { Some(100.0 + t as f64) }).collect()
}

#[test]
fn drop_rule_is_strict() {
    let set = SeriesSet::new(
        start(),
        vec![series(1, with_missing(100, 21)), series(2, with_missing(100, 20)), series(3, with_missing(100, 0))],
    )
    .unwrap();
    let (kept, report) = drop_sparse_detectors(&set, MAX_MISSING).unwrap();
    assert_eq!(report.kept, vec![2, 3]);
    assert_eq!(report.dropped.len(), 1);
    assert_eq!(report.dropped[0].0, 1);
    assert!((report.dropped[0].1 - 0.21).abs() < 1e-15);
    assert_eq!(kept.nodes(), 2);
    // A missing speed alone counts as a missing hour.
    let mut s = series(1, with_missing(100, 0));
    for v in &mut s.speed[..25] {
        *v = None;
    }
    let set = SeriesSet::new(start(), vec![s, series(2, with_missing(100, 0))]).unwrap();
    assert_eq!(drop_sparse_detectors(&set, MAX_MISSING).unwrap().1.kept, vec![2]);
    let set = SeriesSet::new(start(), vec![series(1, with_missing(100, 30))]).unwrap();
    assert!(matches!(drop_sparse_detectors(&set, MAX_MISSING), Err(Error::EmptyNetwork)));
}

#[test]
fn outlier_rule_uses_lanes_times_capacity() {
    let mut s = series(1, vec![Some(5000.0), Some(5000.5), Some(4999.0), None, Some(9000.0)]);
    assert_eq!(flag_outliers(&mut s, 2500.0), 2);
    assert_eq!(s.flow, vec![Some(5000.0), None, Some(4999.0), None, None]);
    s.lanes = 4;
    s.flow = vec![Some(9000.0), Some(10_000.0), Some(10_000.1)];
    assert_eq!(flag_outliers(&mut s, 2500.0), 1);
}

fn correlated_set(rng: &mut ChaCha8Rng, hours: usize) -> (SeriesSet, Vec<f64>) {
    let a: Vec<f64> = (0..hours).map(|_| rng.random_range(200.0..1500.0)).collect();
    let b_true: Vec<f64> = a.iter().map(|v| 2.0 * v + 10.0).collect();
    let b: Vec<Option<f64>> = b_true
        .iter()
        .enumerate()
        .map(|(t, v)| if t % 7 == 3 { None } else { Some(*v) })
        .collect();
    let mut sa = series(1, a.iter().copied().map(Some).collect());
    sa.lanes = 4;
    let mut sb = series(2, b);
    sb.lanes = 4;
    sb.speed = (0..hours).map(|t| Some(50.0 + (t % 5) as f64)).collect();
    sa.speed = sb.speed.clone();
    (SeriesSet::new(start(), vec![sa, sb]).unwrap(), b_true)
}

#[test]
fn imputation_recovers_an_exactly_correlated_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (set, truth) = correlated_set(&mut rng, 120);
    let (filled, report) = impute_iterative(&set, &ImputeConfig::default()).unwrap();
    assert!(filled.is_complete());
    assert_eq!(report.imputed_cells, (0..120).filter(|t| t % 7 == 3).count());
    for (t, want) in truth.iter().enumerate() {
        let got = filled.series[1].flow[t].unwrap();
        assert!((got - want).abs() < 1e-6 * want, "hour {t}: {got} vs {want}");
    }
    // Observed cells are untouched.
    for (t, v) in set.series[1].flow.iter().enumerate() {
        if let Some(v) = v {
            assert_eq!(filled.series[1].flow[t], Some(*v));
        }
    }
}

#[test]
fn imputation_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (set, _) = correlated_set(&mut rng, 80);
    let (once, _) = impute_iterative(&set, &ImputeConfig::default()).unwrap();
    let (twice, report) = impute_iterative(&once, &ImputeConfig::default()).unwrap();
    assert_eq!(once, twice);
    assert_eq!(report.imputed_cells, 0);
    let (again, _) = impute_iterative(&set, &ImputeConfig::default()).unwrap();
    assert_eq!(once, again);
}

#[test]
fn imputed_flows_respect_capacity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hours = 60;
    let a: Vec<Option<f64>> = (0..hours).map(|_| Some(rng.random_range(0.0..4000.0))).collect();
    let b: Vec<Option<f64>> = a
        .iter()
        .enumerate()
        .map(|(t, v)| if t % 5 == 0 { None } else { v.map(|x| 3.0 * x) })
        .collect();
    let set = SeriesSet::new(start(), vec![series(1, a), series(2, b)]).unwrap();
    let (filled, _) = impute_iterative(&set, &ImputeConfig::default()).unwrap();
    for s in &filled.series {
        for f in &s.flow {
            let f = f.unwrap();
            assert!((0.0..=s.lanes as f64 * 2500.0).contains(&f));
        }
    }
}

#[test]
fn cleaning_runs_the_three_steps_in_order() {
    let mut flows = with_missing(50, 0);
    flows[10] = Some(20_000.0);
    let set = SeriesSet::new(
        start(),
        vec![series(1, flows), series(2, with_missing(50, 0)), series(3, with_missing(50, 15))],
    )
    .unwrap();
    let (out, report) = clean(&set, &CleaningConfig::default()).unwrap();
    assert_eq!(report.drop.kept, vec![1, 2]);
    assert_eq!(report.outliers, 1);
    assert_eq!(report.impute.imputed_cells, 1);
    assert!(out.is_complete());
    assert!(out.series[0].flow[10].unwrap() <= 5000.0);
}

#[test]
fn regular_features_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let hours = 80;
    let s0 = parse_timestamp("2017-05-01T02:00:00").unwrap();
    let set = SeriesSet::new(
        s0,
        (1..=3)
            .map(|id| series(id, (0..hours).map(|_| Some(rng.random_range(0.0..2000.0))).collect()))
            .collect(),
    )
    .unwrap();
    let first = match extract_regular_features(&set, 0) {
        Err(Error::InsufficientHistory { first_valid_hour }) => first_valid_hour,
        other => panic!("expected insufficient history, got {other:?}"),
    };
    // Hour 24 is 02:00 on day 2; its previous-day block 00:00–04:00 starts
    // before the series, so the first usable hour is 04:00 on day 2.
    assert_eq!(first, 26);
    let f = extract_regular_features(&set, first).unwrap();
    assert_eq!(f.channels(), REGULAR_FEATURES);
    let flows = set.flows_by_hour().unwrap();
    let stats = |rows: Vec<usize>, k: usize| {
        assert_eq!(rows.len(), 4);
        let v: Vec<f64> = rows.iter().map(|&r| flows[r][k]).collect();
        let m = v.iter().sum::<f64>() / 4.0;
        (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0).sqrt())
    };
    for t in first..hours {
        let ts = set.timestamp(t);
        let period_start = ts - Duration::hours((ts.hour() % 4) as i64);
        let day_rows: Vec<usize> = (0..hours)
            .filter(|&r| {
                let rs = set.timestamp(r);
                rs.date() == ts.date() - Duration::days(1) && rs.hour() / 4 == ts.hour() / 4
            })
            .collect();
        let prev_rows: Vec<usize> = (0..hours)
            .filter(|&r| {
                let rs = set.timestamp(r);
                rs >= period_start - Duration::hours(4) && rs < period_start
            })
            .collect();
        for k in 0..3 {
            let row = t - first;
            let one_hot: f64 = (0..6).map(|p| f.get(row, k, regular::PERIOD + p)).sum();
            assert_eq!(one_hot, 1.0);
            assert_eq!(f.get(row, k, regular::PERIOD + (ts.hour() / 4) as usize), 1.0);
            assert_eq!(f.get(row, k, regular::FLOW), flows[t][k]);
            assert_eq!(f.get(row, k, regular::ZONE_ID), (k + 1) as f64 / 3.0);
            let (m, s) = stats(day_rows.clone(), k);
            assert!((f.get(row, k, regular::PREV_DAY_MEAN) - m).abs() < 1e-9);
            assert!((f.get(row, k, regular::PREV_DAY_STD) - s).abs() < 1e-9);
            let (m, s) = stats(prev_rows.clone(), k);
            assert!((f.get(row, k, regular::PREV_PERIOD_MEAN) - m).abs() < 1e-9);
            assert!((f.get(row, k, regular::PREV_PERIOD_STD) - s).abs() < 1e-9);
        }
    }
}

fn zones() -> Vec<Zone> {
    vec![
        Zone {
            id: 1,
            population: 1000.0,
            order_issue_hour: -5,
            lat: Some(27.0),
            lon: Some(-82.0),
        },
        Zone {
            id: 2,
            population: 3000.0,
            order_issue_hour: 12,
            lat: Some(27.2),
            lon: Some(-81.9),
        },
    ]
}

#[test]
fn demand_lag_shifts_population_by_exactly_lag_rows() {
    let scenario = generate_synthetic(&ScenarioConfig::default()).unwrap();
    let net = &scenario.network;
    let hours = 72;
    let lagged = extract_demand_features(&zones(), 60, net, start(), hours, 18).unwrap();
    let unlagged = extract_demand_features(&zones(), 60, net, start(), hours, 0).unwrap();
    assert_eq!(lagged.channels(), DEMAND_FEATURES);
    for t in 0..hours {
        let want = if t >= 18 {
            unlagged.get(t - 18, 0, demand::ORDERED_POPULATION)
        } else {
            ordered_population(&zones(), t as i64 - 18, 0)
        };
        for k in 0..net.len() {
            assert_eq!(lagged.get(t, k, demand::ORDERED_POPULATION), want);
            let one_hot: f64 = (0..6).map(|p| lagged.get(t, k, demand::PERIOD + p)).sum();
            assert_eq!(one_hot, 1.0);
            assert_eq!(lagged.get(t, k, demand::HOURS_TO_LANDFALL), (60.0 - t as f64).max(0.0));
        }
    }
    assert_eq!(lagged.get(12, 0, demand::ORDERED_POPULATION), 0.0);
    assert_eq!(lagged.get(13, 0, demand::ORDERED_POPULATION), 1000.0);
    assert_eq!(lagged.get(30, 0, demand::ORDERED_POPULATION), 4000.0);
}

#[test]
fn demand_features_reject_bad_zones() {
    let scenario = generate_synthetic(&ScenarioConfig::default()).unwrap();
    let net = &scenario.network;
    assert!(extract_demand_features(&[], 60, net, start(), 10, 18).is_err());
    let mut z = zones();
    z[0].lat = None;
    assert!(extract_demand_features(&z, 60, net, start(), 10, 18).is_err());
}

#[test]
fn generator_is_deterministic_per_seed() {
    let a = generate_synthetic(&ScenarioConfig::default()).unwrap();
    let b = generate_synthetic(&ScenarioConfig::default()).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic(&ScenarioConfig {
        seed: 8,
        ..ScenarioConfig::default()
    })
    .unwrap();
    assert_ne!(a.regular, c.regular);
    assert_eq!(a.regular.hours(), 2148);
    assert_eq!(a.evacuation.hours(), 120);
    assert_eq!(a.regular.nodes(), 40);
    assert_eq!(a.evacuation.start, a.regular.end());
}

#[test]
fn surge_conserves_trips_of_surging_zones() {
    let s = generate_synthetic(&ScenarioConfig::default()).unwrap();
    let e = &s.config.evacuation;
    let total: f64 = s.truth.surge.iter().flatten().sum();
    let want: f64 = s.truth.surging_zones.iter().map(|&z| e.trip_factor * e.zones[z].population).sum();
    assert!(!s.truth.surging_zones.is_empty());
    assert!((total - want).abs() <= 1e-9 * want);
    // No surge at or after landfall.
    for row in &s.truth.surge[s.landfall_hour as usize..] {
        assert!(row.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn nearest_node_gets_the_largest_surge() {
    let mut cfg = ScenarioConfig::default();
    cfg.evacuation.zones.truncate(1);
    cfg.evacuation.zones[0].order_issue_hour = 0;
    let s = generate_synthetic(&cfg).unwrap();
    let z = &cfg.evacuation.zones[0];
    let dist: Vec<f64> = s
        .network
        .nodes
        .iter()
        .map(|d| evacflow::data::haversine_miles((d.lat, d.lon), (z.lat, z.lon)))
        .collect();
    let integral: Vec<f64> = (0..dist.len()).map(|k| s.truth.surge.iter().map(|r| r[k]).sum()).collect();
    let near = (0..dist.len()).min_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap();
    let far = (0..dist.len()).max_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap();
    assert!(integral[near] > integral[far]);
}

#[test]
fn without_orders_the_evacuation_is_baseline() {
    let mut cfg = ScenarioConfig {
        noise: evacflow::data::synth::NoiseConfig::none(),
        corruption: evacflow::data::synth::CorruptionConfig::none(),
        ..ScenarioConfig::default()
    };
    for z in &mut cfg.evacuation.zones {
        z.order_issue_hour = cfg.evacuation.landfall_hour;
    }
    let s = generate_synthetic(&cfg).unwrap();
    assert!(s.truth.surging_zones.is_empty());
    let flows = s.evacuation.flows_by_hour().unwrap();
    for row in &flows {
        for (k, v) in row.iter().enumerate() {
            assert!((v - s.truth.evacuation_baseline[k]).abs() <= 1e-9 * v.abs().max(1.0));
        }
    }
}

#[test]
fn csv_and_dataset_round_trip() {
    let s = generate_synthetic(&ScenarioConfig {
        regular_hours: 96,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset::from_scenario(&s);
    ds.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back, ds);
    let header = std::fs::read_to_string(dir.path().join("regular.csv")).unwrap();
    assert!(header.starts_with("timestamp,node_id,flow,speed,missing_flag\n"));
}

#[test]
fn malformed_csv_fails_loudly() {
    let s = generate_synthetic(&ScenarioConfig {
        regular_hours: 30,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "timestamp,node_id,flow,speed,missing_flag\nnot-a-time,1,3,4,0\n").unwrap();
    assert!(matches!(SeriesSet::read_csv(&path, &s.network), Err(Error::Parse { .. })));
    assert!(matches!(SeriesSet::read_csv(dir.path().join("absent.csv"), &s.network), Err(Error::Io { .. })));
}

#[test]
fn default_pipeline_sample_counts() {
    let s = generate_synthetic(&ScenarioConfig::default()).unwrap();
    let p = prepare(&Dataset::from_scenario(&s), &PipelineConfig::default()).unwrap();
    assert_eq!(p.regular.len(), 2148 - 48 - 6 - 6 + 1);
    assert_eq!(p.evacuation.as_ref().unwrap().len(), 120 - 12 + 1);
    assert_eq!(p.regular.channels(), REGULAR_FEATURES);
    assert!(p.regular_series.is_complete());
    // Windows read the cleaned flows at the right hours.
    let flows = p.regular_series.flows_by_hour().unwrap();
    let t = p.regular.materialize_targets(&[5]);
    let first = p.regular.target_hours(5).start + p.regular_offset;
    assert_eq!(t.data()[..p.regular.nodes()], flows[first][..]);
}

#[test]
fn sparse_detectors_are_dropped_from_both_phases() {
    let mut cfg = ScenarioConfig::default();
    cfg.corruption.sparse_detectors = 2;
    let s = generate_synthetic(&cfg).unwrap();
    let p = prepare(&Dataset::from_scenario(&s), &PipelineConfig::default()).unwrap();
    assert_eq!(p.report.dropped.len(), 2);
    assert_eq!(p.network.len(), 38);
    assert_eq!(p.regular.nodes(), 38);
    assert_eq!(p.evacuation.as_ref().unwrap().nodes(), 38);
    let dropped: Vec<usize> = p.report.dropped.iter().map(|d| d.0).collect();
    assert!(p.network.nodes.iter().all(|d| !dropped.contains(&d.source_id())));
}

#[test]
fn split_partitions_every_sample() {
    for n in [20usize, 109, 2089] {
        for ratios in [SplitRatios::REGULAR, SplitRatios::EVACUATION] {
            let s = split_samples(n, ratios, 5).unwrap();
            assert_eq!(s.train.len(), (n as f64 * ratios.train).floor() as usize);
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
    assert_ne!(split_samples(100, SplitRatios::EVACUATION, 1).unwrap(), split_samples(100, SplitRatios::EVACUATION, 2).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_scaler_round_trips(lo in -1e4f64..1e4, span in 1e-3f64..1e4, x in 0.0f64..1.0) {
        let s = FlowScaler::fit([lo, lo + span]).unwrap();
        let v = lo + x * span;
        let y = s.apply(v);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&y));
        prop_assert!((s.invert(y) - v).abs() <= 1e-9 * span.max(v.abs()));
    }

    #[test]
    fn windows_pair_inputs_with_the_next_hours(h in 3usize..60, l in 1usize..6, p in 1usize..6, stride in 1usize..4) {
        prop_assume!(h >= l + p);
        let x = Tensor::from_fn(vec![h, 2, 1], |i| (i / 2) as f64);
        let y = Tensor::from_fn(vec![h, 2], |i| (i / 2) as f64);
        let w = window_samples(x, y, l, p, stride).unwrap();
        prop_assert_eq!(w.len(), (h - l - p) / stride + 1);
        for s in 0..w.len() {
            let inputs = w.materialize_inputs(&[s]);
            let targets = w.materialize_targets(&[s]);
            prop_assert_eq!(targets.data()[0], inputs.data()[inputs.len() - 1] + 1.0);
        }
    }

    #[test]
    fn missing_fraction_matches_count(missing in 0usize..50) {
        let s = series(1, with_missing(50, missing));
        prop_assert_eq!(s.missing_fraction(), missing as f64 / 50.0);
    }
}
