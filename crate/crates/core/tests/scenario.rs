use std::collections::HashMap;

use ridesplit_core::emissions::CopertParams;
use ridesplit_core::features::{validity_filter, PeakHours, ValidityRules};
use ridesplit_core::ingest::{filter_orders, parse_fixes, parse_orders, retain_fixes, write_fixes, write_orders, OrderLimits, TableFormat};
use ridesplit_core::pipeline::{analyze, MatchSettings};
use ridesplit_core::synth::{generate, Anomalies, OdCluster, PoolCounts, ScenarioSpec, SingleKind};
use ridesplit_core::trips::{reconstruct, TripSettings};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-9)
}

fn spec() -> ScenarioSpec {
    ScenarioSpec {
        single_rides: 60,
        pool_trips: PoolCounts { nsr2: 30, nsr3: 15, nsr4: 5 },
        od_cluster: Some(OdCluster { rides: 40, center_m: 4000.0, spread_m: 800.0 }),
        anomalies: Anomalies { too_short: 4, too_long: 3, out_of_region: 2, drift: 5, gaps: 6 },
        ..ScenarioSpec::empty(11)
    }
}

#[test]
fn pipeline_reproduces_ground_truth() {
    let params = CopertParams::default();
    let scenario = generate(&spec(), &params).unwrap();
    let truth = &scenario.truth;
    let grid = spec().grid;

    // through the file formats
    let fmt = TableFormat::default();
    let mut ob = Vec::new();
    let mut fb = Vec::new();
    write_orders(&mut ob, &scenario.orders, &fmt).unwrap();
    write_fixes(&mut fb, &scenario.fixes, &fmt).unwrap();
    let orders = parse_orders(ob.as_slice(), &fmt).unwrap();
    let fixes = parse_fixes(fb.as_slice(), &fmt).unwrap();
    assert_eq!(orders.malformed + fixes.malformed, 0);

    let (kept, drops) = filter_orders(orders.records, &grid, &OrderLimits::default());
    assert_eq!(drops.too_short, truth.anomalies.too_short.len());
    assert_eq!(drops.too_long, truth.anomalies.too_long.len());
    assert_eq!(drops.out_of_region, truth.anomalies.out_of_region.len());
    assert_eq!(drops.kept + drops.dropped(), drops.input);
    let fixes = retain_fixes(fixes.records, &kept);

    let recon = reconstruct(&kept, &fixes, &TripSettings::default());
    let seg = recon.report.segments;
    assert_eq!(seg.too_long_distance, 2 * truth.anomalies.drift.len());
    assert_eq!(seg.too_long_time, truth.anomalies.gaps.len());
    assert_eq!(seg.too_fast, 0);
    assert_eq!(seg.kept + seg.too_long_time + seg.too_long_distance + seg.too_fast, seg.input);
    assert_eq!(recon.pools.len(), truth.pools.len());

    let singles: HashMap<&str, _> = recon.singles.iter().map(|r| (r.order.order_id.as_str(), r)).collect();
    for t in &truth.singles {
        let r = singles[t.order_id.as_str()];
        assert!(rel(r.trip_distance, t.trip_distance_m) < 1e-9, "{}", t.order_id);
        let c = t.trip_time_s / t.surviving_time_s;
        assert!((r.calibration - c).abs() < 1e-12, "{}: C {} vs {c}", t.order_id, r.calibration);
        if t.kind == SingleKind::Background {
            assert_eq!(r.calibration, 1.0);
        }
    }

    let analysis = analyze(&recon, &params, &grid, &MatchSettings::default(), &PeakHours::default()).unwrap();
    assert_eq!(analysis.report.unmatched, 0);
    let pools: HashMap<&str, usize> = recon.pools.iter().enumerate().map(|(i, p)| (p.trip_id.as_str(), i)).collect();
    let rows: HashMap<&str, _> = analysis.rows.iter().map(|r| (r.record.trip_id.as_str(), r)).collect();
    let reductions: HashMap<&str, _> = analysis.reductions.iter().map(|r| (r.trip_id.as_str(), r)).collect();
    for t in &truth.pools {
        let i = pools[t.trip_id.as_str()];
        assert!(rel(recon.pools[i].trip_distance, t.trip_distance_m) < 1e-9);
        assert!(rel(analysis.pool_emissions[i], t.emission_g) < 1e-9);
        let row = rows[t.trip_id.as_str()];
        assert!(rel(row.record.overlap_distance_km * 1000.0, t.overlap_distance_m) < 1e-6, "{}", t.trip_id);
        assert_eq!(row.overlap_time_s, t.overlap_time_s);
        assert!((row.record.detour_distance_km * 1000.0 - t.detour_distance_m).abs() < 1e-6 * t.trip_distance_m);
        let red = reductions[t.trip_id.as_str()];
        assert!((red.saved_distance - t.saved_distance_m).abs() < 1e-6 * t.trip_distance_m);
        assert!((red.emission_reduction - t.emission_reduction_g).abs() < 1e-6 * t.emission_g);
    }

    let expected_invalid = truth.pools.iter().filter(|p| p.nsr == 4 || p.overlap_distance_m < 500.0 || p.overlap_time_s < 60.0).count();
    let (valid, vd) = validity_filter(analysis.rows.clone(), &ValidityRules::default());
    assert_eq!(vd.input - vd.kept, expected_invalid);
    assert_eq!(vd.nsr_not_allowed + vd.short_overlap_distance + vd.short_overlap_time + vd.kept, vd.input);
    assert_eq!(valid.len(), truth.pools.len() - expected_invalid);
}

#[test]
fn generated_files_are_byte_identical() {
    let params = CopertParams::default();
    let bytes = |seed| {
        let s = generate(&ScenarioSpec { seed, ..spec() }, &params).unwrap();
        let mut ob = Vec::new();
        let mut fb = Vec::new();
        write_orders(&mut ob, &s.orders, &TableFormat::default()).unwrap();
        write_fixes(&mut fb, &s.fixes, &TableFormat::default()).unwrap();
        (ob, fb, serde_json::to_vec(&s.truth).unwrap())
    };
    assert_eq!(bytes(5), bytes(5));
}
