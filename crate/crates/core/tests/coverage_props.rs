mod common;

use std::collections::BTreeSet;
use std::f64::consts::PI;

use loiter_core::coverage::{effective_coverage, same_level_neighbors, CoverageGrid};
use loiter_core::fixtures::uh_polygon;
use loiter_core::fleet::{initial_deploy, UavId, UavState};
use loiter_core::geometry::{circle_fraction_outside, Circle, Point2, Polygon};
use loiter_core::packing::{build_packing, FleetConfig, PackingOptions, SquareId};
use loiter_core::protocol::{apply_decision_completed, drop_agents, resolve_failures, ProtocolContext, SelectionPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn agent(id: u32, p: Point2, level: u8, config: &FleetConfig) -> UavState {
    let circle = Circle::new(p, config.loiter_radius(level).unwrap()).unwrap();
    UavState::loitering(UavId(id), SquareId(0), level, circle, 0.0, config).unwrap()
}

#[test]
fn effective_coverage_matches_sampling() {
    let config = FleetConfig::default();
    let poly = uh_polygon();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for layout in 0..6 {
        let fleet: Vec<UavState> = (0..12)
            .map(|i| {
                let level = if layout % 2 == 0 { 1 } else { rng.gen_range(1..=2) };
                agent(i, Point2::new(rng.gen_range(0.0..1300.0), rng.gen_range(50.0..1050.0)), level, &config)
            })
            .collect();
        for a in &fleet {
            let neighbors = same_level_neighbors(a, &fleet, config.r_com());
            let e = effective_coverage(a, &neighbors, &poly, 1.0).unwrap();
            let others: Vec<(Point2, f64)> =
                neighbors.iter().map(|n| (n.loiter_circle.center, n.loiter_circle.radius)).collect();
            let r = a.loiter_circle.radius;
            let sampled = common::effective_coverage_sampled(a.loiter_circle.center, r, &others, &poly, 500).max(0.0);
            let disc = PI * r * r;
            assert!((e - sampled).abs() <= 0.01 * disc, "layout {layout} agent {}: {e} vs {sampled}", a.id);
            let f = circle_fraction_outside(&a.loiter_circle, &poly, 1.0).unwrap();
            assert!(e <= (1.0 - f) * disc + 1e-9);
        }
    }
}

#[test]
fn promotion_trades_quality_for_coverage() {
    let config = FleetConfig::default();
    let poly = Polygon::from_xy(&[0.0, 640.0, 640.0, 0.0], &[0.0, 0.0, 640.0, 640.0]).unwrap();
    let packing = build_packing(&poly, &config, PackingOptions::default()).unwrap();
    let fleet = initial_deploy(&packing, 0.0).unwrap();
    let grid = CoverageGrid::new(&poly, 4.0, config.r_l_min).unwrap();
    let before = grid.evaluate(&fleet, &poly, &config).unwrap();
    assert!(before.fully_covered());

    let ctx = ProtocolContext {
        packing: &packing,
        polygon: &poly,
        policy: SelectionPolicy::EffectiveCoverage,
        now: 0.0,
    };
    let lost: BTreeSet<UavId> = [UavId(27)].into();
    let decisions = resolve_failures(&fleet, &lost, &ctx).unwrap();
    let mut after = fleet.clone();
    drop_agents(&mut after, &lost).unwrap();
    for d in &decisions {
        apply_decision_completed(d, &mut after, &packing, 0.0).unwrap();
    }
    let report = grid.evaluate(&after, &poly, &config).unwrap();
    assert_eq!(report.fraction_covered, 1.0);
    assert!(report.mean_quality < before.mean_quality);
    assert!(report.best_quality_mean <= before.best_quality_mean);
}
