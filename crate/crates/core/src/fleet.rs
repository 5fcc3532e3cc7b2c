//! Agent state, per-level phase clocks and the altitude/quality ladder.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dubins::{pose_at, TransitionPlan};
use crate::geometry::{normalize_angle, Circle, Pose3};
use crate::packing::{check_level, level_scale, ConfigError, FleetConfig, Packing, SquareId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FleetError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("agent {id} is {mode:?}, expected {expected:?}")]
    InvalidMode {
        id: UavId,
        mode: Mode,
        expected: Mode,
    },
    #[error("negative time step {0}")]
    NegativeStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UavId(pub u32);

impl std::fmt::Display for UavId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Loitering,
    Transitioning,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: UavId,
    pub mode: Mode,
    /// Current altitude level; updated on arrival, not at decision time.
    pub level: u8,
    pub altitude: f64,
    /// Square the agent serves, or is travelling to serve.
    pub assigned_square: SquareId,
    pub loiter_circle: Circle,
    pub phase: f64,
    pub position: Pose3,
    pub velocity: f64,
    pub transition: Option<TransitionPlan>,
}

impl UavState {
    pub fn is_live(&self) -> bool {
        self.mode != Mode::Dropped
    }

    pub fn is_loitering(&self) -> bool {
        self.mode == Mode::Loitering
    }

    /// A loitering agent at `phase` on `circle`, flying counter-clockwise.
    pub fn loitering(
        id: UavId,
        square: SquareId,
        level: u8,
        circle: Circle,
        phase: f64,
        config: &FleetConfig,
    ) -> Result<Self, FleetError> {
        let altitude = altitude_for_level(level, config)?;
        Ok(Self {
            id,
            mode: Mode::Loitering,
            level,
            altitude,
            assigned_square: square,
            loiter_circle: circle,
            phase: normalize_angle(phase),
            position: loiter_pose(&circle, altitude, phase),
            velocity: config.velocity,
            transition: None,
        })
    }
}

/// Pose on a counter-clockwise loiter circle at angle `phase`.
pub fn loiter_pose(circle: &Circle, altitude: f64, phase: f64) -> Pose3 {
    let p = circle.point_at(phase);
    Pose3::new(p.x, p.y, altitude, phase + std::f64::consts::FRAC_PI_2)
}

/// Shared phase of all loitering agents on one level, `φ(t) = ω·t mod 2π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelClock {
    pub level: u8,
    pub angular_rate: f64,
}

impl LevelClock {
    pub fn new(level: u8, config: &FleetConfig) -> Result<Self, ConfigError> {
        let radius = config.loiter_radius(level)?;
        Ok(Self {
            level,
            angular_rate: config.velocity / radius,
        })
    }

    pub fn phase_at(&self, t: f64) -> f64 {
        normalize_angle(self.angular_rate * t)
    }

    pub fn period(&self) -> f64 {
        TAU / self.angular_rate
    }
}

/// One clock per level, index `level - 1`.
pub fn level_clocks(config: &FleetConfig) -> Result<[LevelClock; 4], ConfigError> {
    Ok([
        LevelClock::new(1, config)?,
        LevelClock::new(2, config)?,
        LevelClock::new(3, config)?,
        LevelClock::new(4, config)?,
    ])
}

/// `r_l_min · 2^(level-1) / tan θ`, so the footprint radius equals the loiter radius.
pub fn altitude_for_level(level: u8, config: &FleetConfig) -> Result<f64, ConfigError> {
    check_level(level)?;
    Ok(config.r_l_min * level_scale(level) / config.fov_half_angle.tan())
}

/// Footprint radius `h · tan θ`.
pub fn coverage_radius(altitude: f64, fov_half_angle: f64) -> f64 {
    altitude * fov_half_angle.tan()
}

/// `h₁ / h_level`.
pub fn quality(level: u8, config: &FleetConfig) -> Result<f64, ConfigError> {
    Ok(altitude_for_level(1, config)? / altitude_for_level(level, config)?)
}

/// Advances a loitering agent by `dt` along its circle.
pub fn step_loiter(state: &UavState, clock: &LevelClock, dt: f64) -> Result<UavState, FleetError> {
    if state.mode != Mode::Loitering {
        return Err(FleetError::InvalidMode {
            id: state.id,
            mode: state.mode,
            expected: Mode::Loitering,
        });
    }
    if dt < 0.0 {
        return Err(FleetError::NegativeStep(dt));
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let phase = normalize_angle(state.phase + clock.angular_rate * dt);
    let mut next = state.clone();
    next.phase = phase;
    next.position = loiter_pose(&state.loiter_circle, state.altitude, phase);
    Ok(next)
}

/// Places a loitering agent at its level's clock phase for absolute time `t`.
pub fn loiter_at(state: &mut UavState, clock: &LevelClock, t: f64) {
    state.phase = clock.phase_at(t);
    state.position = loiter_pose(&state.loiter_circle, state.altitude, state.phase);
}

/// Outcome of advancing a transitioning agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionProgress {
    Waiting,
    EnRoute,
    Arrived,
}

/// Moves a transitioning agent to absolute time `t`: it keeps loitering until
/// break-off, follows its path, and snaps onto the target clock on arrival.
pub fn advance_transition(
    state: &mut UavState,
    clocks: &[LevelClock; 4],
    config: &FleetConfig,
    t: f64,
) -> Result<TransitionProgress, FleetError> {
    if state.mode != Mode::Transitioning {
        return Err(FleetError::InvalidMode {
            id: state.id,
            mode: state.mode,
            expected: Mode::Transitioning,
        });
    }
    let plan = state.transition.as_ref().expect("transitioning agent carries a plan");
    if t < plan.break_off_time {
        loiter_at(state, &clocks[state.level as usize - 1], t);
        return Ok(TransitionProgress::Waiting);
    }
    if t < plan.join_in_time {
        let pose = pose_at(&plan.path, t - plan.break_off_time);
        state.position = pose;
        state.altitude = pose.h;
        return Ok(TransitionProgress::EnRoute);
    }
    let plan = state.transition.take().expect("plan present");
    state.mode = Mode::Loitering;
    state.level = plan.target_level;
    state.altitude = altitude_for_level(plan.target_level, config)?;
    state.loiter_circle = plan.target_circle;
    loiter_at(state, &clocks[plan.target_level as usize - 1], t);
    Ok(TransitionProgress::Arrived)
}

/// One agent per inside base square, synchronized on level 1 at time `t0`.
pub fn initial_deploy(packing: &Packing, t0: f64) -> Result<Vec<UavState>, FleetError> {
    let config = &packing.config;
    let clock = LevelClock::new(1, config)?;
    packing
        .base_squares
        .iter()
        .enumerate()
        .map(|(k, &sq)| {
            UavState::loitering(
                UavId(k as u32),
                sq,
                1,
                packing.square(sq).loiter_circle(),
                clock.phase_at(t0),
                config,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, Polygon};
    use crate::packing::{build_packing, PackingOptions};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn agent(config: &FleetConfig) -> UavState {
        let circle = Circle::new(Point2::new(40.0, 40.0), 80.0).unwrap();
        UavState::loitering(UavId(0), SquareId(84), 1, circle, 0.3, config).unwrap()
    }

    #[test]
    fn altitude_ladder() {
        let c = FleetConfig::default();
        let hs: Vec<f64> = (1..=4).map(|l| altitude_for_level(l, &c).unwrap()).collect();
        for (h, expect) in hs.iter().zip([80.0, 160.0, 320.0, 640.0]) {
            assert!((h - expect).abs() < 1e-9, "{h} vs {expect}");
        }
        let steep = FleetConfig {
            fov_half_angle: 2.0f64.atan(),
            ..FleetConfig::default()
        };
        assert!((altitude_for_level(1, &steep).unwrap() - 40.0).abs() < 1e-9);
        assert!(altitude_for_level(0, &c).is_err());
        assert!(altitude_for_level(5, &c).is_err());
    }

    #[test]
    fn footprint_radius() {
        assert!((coverage_radius(80.0, FRAC_PI_4) - 80.0).abs() < 1e-12);
        assert_eq!(coverage_radius(0.0, FRAC_PI_4), 0.0);
        let ratio = coverage_radius(80.0, FRAC_PI_4) / coverage_radius(160.0, FRAC_PI_4);
        assert!((ratio - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quality_ladder() {
        let c = FleetConfig::default();
        assert_eq!(quality(1, &c).unwrap(), 1.0);
        assert_eq!(quality(2, &c).unwrap(), 0.5);
        assert_eq!(quality(4, &c).unwrap(), 0.125);
        for l in 1..=4u8 {
            assert_eq!(quality(l, &c).unwrap() * f64::from(1u32 << (l - 1)), 1.0);
        }
    }

    #[test]
    fn loiter_step_examples() {
        let c = FleetConfig::default();
        let a = agent(&c);
        let clock = LevelClock::new(1, &c).unwrap();
        assert_eq!(clock.angular_rate, 0.25);
        let b = step_loiter(&a, &clock, 1.0).unwrap();
        assert!((b.phase - 0.55).abs() < 1e-15);
        assert_eq!(step_loiter(&a, &clock, 0.0).unwrap(), a);
        let full = step_loiter(&a, &clock, clock.period()).unwrap();
        assert!((full.phase - a.phase).abs() < 1e-12);
        assert!(full.position.horizontal_distance(&a.position) < 1e-9);
        let mut dropped = a.clone();
        dropped.mode = Mode::Dropped;
        assert!(matches!(
            step_loiter(&dropped, &clock, 1.0),
            Err(FleetError::InvalidMode { .. })
        ));
    }

    #[test]
    fn loiter_pose_is_tangent_ccw() {
        let circle = Circle::new(Point2::new(0.0, 0.0), 80.0).unwrap();
        let p = loiter_pose(&circle, 80.0, 0.0);
        assert!((p.x - 80.0).abs() < 1e-12 && p.y.abs() < 1e-12);
        assert!((p.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn deploy_counts_and_phase() {
        let c = FleetConfig::default();
        let tile = Polygon::from_xy(&[0.0, 1280.0, 1280.0, 0.0], &[0.0, 0.0, 1280.0, 1280.0]).unwrap();
        let p = build_packing(&tile, &c, PackingOptions::default()).unwrap();
        assert_eq!(initial_deploy(&p, 0.0).unwrap().len(), 256);
        let one = Polygon::from_xy(&[0.0, 80.0, 80.0, 0.0], &[0.0, 0.0, 80.0, 80.0]).unwrap();
        let p = build_packing(&one, &c, PackingOptions::default()).unwrap();
        let fleet = initial_deploy(&p, 0.0).unwrap();
        assert_eq!(fleet.len(), 1);
        assert_eq!(fleet[0].phase, 0.0);
        assert_eq!(fleet[0].level, 1);
        assert_eq!(fleet[0].altitude, altitude_for_level(1, &c).unwrap());
    }

    proptest! {
        #[test]
        fn chord_matches_angular_step(phase in 0.0f64..TAU, dt in 0.001f64..5.0, level in 1u8..=4) {
            let c = FleetConfig::default();
            let r = c.loiter_radius(level).unwrap();
            let circle = Circle::new(Point2::new(0.0, 0.0), r).unwrap();
            let a = UavState::loitering(UavId(0), SquareId(0), level, circle, phase, &c).unwrap();
            let clock = LevelClock::new(level, &c).unwrap();
            let b = step_loiter(&a, &clock, dt).unwrap();
            let chord = a.position.horizontal_distance(&b.position);
            let expect = 2.0 * r * (clock.angular_rate * dt / 2.0).sin().abs();
            prop_assert!((chord - expect).abs() < 1e-9 * r);
            prop_assert!((clock.angular_rate * r - c.velocity).abs() < 1e-12);
            prop_assert_eq!(b.altitude, a.altitude);
        }

        #[test]
        fn altitudes_double(r in 25.0f64..500.0, theta in 0.1f64..1.4) {
            let c = FleetConfig { r_l_min: r, fov_half_angle: theta, ..FleetConfig::default() };
            for l in 1..4u8 {
                let ratio = altitude_for_level(l + 1, &c).unwrap() / altitude_for_level(l, &c).unwrap();
                prop_assert!((ratio - 2.0).abs() < 1e-12);
            }
        }
    }
}
