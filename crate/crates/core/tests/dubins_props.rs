mod common;

use std::f64::consts::TAU;

use loiter_core::dubins::{
    plan_dubins_2d, plan_level_transition, pose_at, word_parameters, DubinsError, Planner, PrimitiveKind, Word,
};
use loiter_core::fleet::{altitude_for_level, LevelClock, UavId, UavState};
use loiter_core::geometry::{angle_distance, Circle, Point2, Pose3};
use loiter_core::packing::{FleetConfig, SquareId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn each_word_matches_its_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    for _ in 0..500 {
        let start = Pose3::new(rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0), 0.0, rng.gen_range(0.0..TAU));
        let goal = Pose3::new(rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0), 0.0, rng.gen_range(0.0..TAU));
        let r = rng.gen_range(20.0..150.0);
        let oracle = common::dubins_word_lengths(&start, &goal, r);
        for (word, expected) in Word::ALL.iter().zip(oracle) {
            let got = word_parameters(*word, &start, &goal, r).map(|p| r * p.iter().sum::<f64>());
            match (got, expected) {
                (Some(a), Some(b)) => {
                    assert!((a - b).abs() < 1e-9 * b.max(1.0), "{word}: {a} vs {b}");
                    compared += 1;
                }
                (None, None) => {}
                (a, b) => panic!("{word}: existence differs, {a:?} vs {b:?}"),
            }
        }
    }
    assert!(compared > 2000);
}

#[test]
fn quadrant_climb_is_monotone() {
    // level-1 circle in one quadrant of its level-2 parent
    let config = FleetConfig::default();
    let current_circle = Circle::new(Point2::new(40.0, 40.0), 80.0).unwrap();
    let target = Circle::new(Point2::new(80.0, 80.0), 160.0).unwrap();
    let agent = UavState::loitering(UavId(0), SquareId(84), 1, current_circle, 0.3, &config).unwrap();
    let clock = LevelClock::new(2, &config).unwrap();
    let plan = plan_level_transition(&agent, target, 2, &|t| clock.phase_at(t), 0.0, &config).unwrap();
    for m in &plan.path.word {
        assert!(matches!(m.kind, PrimitiveKind::Hl | PrimitiveKind::Hr | PrimitiveKind::S | PrimitiveKind::N));
        assert!(m.climb_rate >= 0.0);
    }
    assert_eq!(plan.path.word.last().unwrap().kind, PrimitiveKind::N);
    let mut h = plan.path.start.h;
    let steps = 2000;
    for k in 0..=steps {
        let p = pose_at(&plan.path, plan.path.duration() * k as f64 / steps as f64);
        assert!(p.h >= h - 1e-9);
        h = p.h;
    }
    assert!((h - altitude_for_level(2, &config).unwrap()).abs() < 1e-9);
}

#[test]
fn planner_edge_cases() {
    let p = Pose3::new(10.0, 20.0, 80.0, 1.0);
    let path = plan_dubins_2d(&p, &p, 80.0, 20.0).unwrap();
    assert_eq!(path.length, 0.0);
    assert_eq!(path.word_string(), "N");
    let mut planner = Planner::new(80.0, 20.0).unwrap();
    planner.denied = Word::ALL.to_vec();
    let goal = Pose3::new(500.0, 0.0, 80.0, 0.0);
    assert!(matches!(planner.plan_2d(&p, &goal), Err(DubinsError::AllWordsDenied)));
    assert!(Planner::new(0.0, 20.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lifted_paths_reach_their_goal(
        sx in -400.0f64..400.0, sy in -400.0f64..400.0, sh in 40.0f64..400.0, st in 0.0f64..TAU,
        gx in -400.0f64..400.0, gy in -400.0f64..400.0, gh in 40.0f64..400.0, gt in 0.0f64..TAU,
    ) {
        let start = Pose3::new(sx, sy, sh, st);
        let goal = Pose3::new(gx, gy, gh, gt);
        let planner = Planner::new(80.0, 20.0).unwrap();
        let path = planner.plan_3d(&start, &goal).unwrap();
        let end = pose_at(&path, path.duration());
        prop_assert!(end.distance_3d(&goal) < 1e-6 * path.length + 1e-9);
        prop_assert!(angle_distance(end.heading, goal.heading) < 1e-9);
        prop_assert!(path.length >= start.distance_3d(&goal) - 1e-9);
        let climb: f64 = path.word.iter().map(|m| m.climb_rate * m.duration).sum();
        prop_assert!((climb - (gh - sh)).abs() < 1e-6);
        prop_assert!(path.word.iter().all(|m| m.climb_rate.abs() <= planner.max_climb_rate + 1e-12));
    }

    #[test]
    fn synchronized_join_always_exists(
        level in 1u8..=3, up in any::<bool>(), phase in 0.0f64..TAU, now in 0.0f64..500.0,
        dist in 0.0f64..2.0, dir in 0.0f64..TAU,
    ) {
        let config = FleetConfig::default();
        let target_level = if up { level + 1 } else { level };
        let c0 = Circle::new(Point2::new(0.0, 0.0), config.loiter_radius(level).unwrap()).unwrap();
        let r1 = config.loiter_radius(target_level).unwrap();
        let c1 = Circle::new(Point2::new(0.0, 0.0).polar(dist * r1 + if up { 0.0 } else { 2.0 * r1 }, dir), r1).unwrap();
        let agent = UavState::loitering(UavId(0), SquareId(0), level, c0, phase, &config).unwrap();
        let clock = LevelClock::new(target_level, &config).unwrap();
        let plan = plan_level_transition(&agent, c1, target_level, &|t| clock.phase_at(t), now, &config).unwrap();
        prop_assert!(plan.phase_error < 1e-6);
        prop_assert!(plan.break_off_time >= now);
        prop_assert!(plan.break_off_time <= now + clock.period() + 1e-9);
        prop_assert!((plan.join_in.position().distance(c1.center) - r1).abs() < 1e-6);
    }
}
