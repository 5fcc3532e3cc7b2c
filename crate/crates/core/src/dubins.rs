//! Curvature-bounded transition paths.
//!
//! Planar paths use the six classic three-segment words. Altitude changes are
//! layered on top by turning the arcs into helices; when the arcs are too short
//! for the climb-rate cap, whole loops are added to the first arc.
//!
//! Level transitions search over break-off time and join-in angle so that the
//! agent reaches the target circle exactly when the target level's shared
//! phase passes the join-in point.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::{altitude_for_level, loiter_pose, UavId, UavState};
use crate::geometry::{normalize_angle, wrap_pi, Circle, Pose3};
use crate::packing::{ConfigError, FleetConfig};

/// Arc parameters within this of a full turn are treated as zero.
const FULL_TURN_SNAP: f64 = 1e-10;
/// Normalized segment lengths below this are dropped from the word.
const ZERO_SEGMENT: f64 = 1e-12;
/// Tolerance on the phase residual of an accepted join-in.
pub const SYNC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DubinsError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("turn radius {radius} m is invalid (minimum {min} m)")]
    TurnRadius { radius: f64, min: f64 },
    #[error("speed {0} m/s is invalid")]
    Speed(f64),
    #[error("planar planning needs equal altitudes, got {start} and {goal}")]
    AltitudeMismatch { start: f64, goal: f64 },
    #[error("every candidate word is denied")]
    AllWordsDenied,
    #[error("sampling step {0} must be positive")]
    Step(f64),
    #[error("transition from level {from} to level {to} skips a level")]
    LevelGap { from: u8, to: u8 },
    #[error("agent {0} is not loitering")]
    NotLoitering(UavId),
    #[error("no phase-synchronized join-in found for agent {0}")]
    Unsynchronizable(UavId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrimitiveKind {
    S,
    L,
    R,
    Hl,
    Hr,
    N,
}

impl PrimitiveKind {
    pub fn is_turn(self) -> bool {
        matches!(self, Self::L | Self::R | Self::Hl | Self::Hr)
    }

    fn letter(self) -> &'static str {
        match self {
            Self::S => "S",
            Self::L => "L",
            Self::R => "R",
            Self::Hl => "Hl",
            Self::Hr => "Hr",
            Self::N => "N",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub kind: PrimitiveKind,
    /// Seconds.
    pub duration: f64,
    /// Zero for straight and no-motion segments.
    pub turn_radius: f64,
    /// Vertical speed on helices, zero elsewhere.
    pub climb_rate: f64,
}

impl MotionPrimitive {
    fn none() -> Self {
        Self {
            kind: PrimitiveKind::N,
            duration: 0.0,
            turn_radius: 0.0,
            climb_rate: 0.0,
        }
    }
}

/// The six planar candidate words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Word {
    Lsl,
    Rsr,
    Lsr,
    Rsl,
    Rlr,
    Lrl,
}

impl Word {
    pub const ALL: [Word; 6] = [Word::Lsl, Word::Rsr, Word::Lsr, Word::Rsl, Word::Rlr, Word::Lrl];

    pub fn kinds(self) -> [PrimitiveKind; 3] {
        use PrimitiveKind::{L, R, S};
        match self {
            Word::Lsl => [L, S, L],
            Word::Rsr => [R, S, R],
            Word::Lsr => [L, S, R],
            Word::Rsl => [R, S, L],
            Word::Rlr => [R, L, R],
            Word::Lrl => [L, R, L],
        }
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: String = self.kinds().iter().map(|k| k.letter()).collect();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DubinsPath3D {
    pub word: Vec<MotionPrimitive>,
    pub start: Pose3,
    pub goal: Pose3,
    /// Metres travelled, including the vertical component on helices.
    pub length: f64,
    /// Horizontal speed, m/s.
    pub speed: f64,
    /// Planar word the path was built from; `None` for a zero-length path.
    pub planar_word: Option<Word>,
}

impl DubinsPath3D {
    pub fn duration(&self) -> f64 {
        self.word.iter().map(|m| m.duration).sum()
    }

    pub fn horizontal_length(&self) -> f64 {
        self.duration() * self.speed
    }

    /// Letters of the motion word, e.g. `HrSHrN`.
    pub fn word_string(&self) -> String {
        self.word.iter().map(|m| m.kind.letter()).collect()
    }
}

/// Maps to `[0, 2π)` and folds values just below a full turn onto zero.
fn mod2pi(a: f64) -> f64 {
    let v = normalize_angle(a);
    if v > TAU - FULL_TURN_SNAP {
        0.0
    } else {
        v
    }
}

/// Normalized `(t, p, q)` arc/straight parameters of `word`, in units of the
/// turn radius, or `None` when the word has no solution.
pub fn word_parameters(word: Word, start: &Pose3, goal: &Pose3, r: f64) -> Option<[f64; 3]> {
    let dx = goal.x - start.x;
    let dy = goal.y - start.y;
    let d = dx.hypot(dy) / r;
    let theta = mod2pi(dy.atan2(dx));
    let alpha = mod2pi(start.heading - theta);
    let beta = mod2pi(goal.heading - theta);
    let (sa, sb, ca, cb) = (alpha.sin(), beta.sin(), alpha.cos(), beta.cos());
    let c_ab = (alpha - beta).cos();
    let sqrt_nonneg = |v: f64| if v < -1e-12 { None } else { Some(v.max(0.0).sqrt()) };
    let acos_checked = |v: f64| {
        if v.abs() > 1.0 + 1e-12 {
            None
        } else {
            Some(v.clamp(-1.0, 1.0).acos())
        }
    };
    match word {
        Word::Lsl => {
            let tmp0 = d + sa - sb;
            let p = sqrt_nonneg(2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sa - sb))?;
            let tmp1 = (cb - ca).atan2(tmp0);
            Some([mod2pi(tmp1 - alpha), p, mod2pi(beta - tmp1)])
        }
        Word::Rsr => {
            let tmp0 = d - sa + sb;
            let p = sqrt_nonneg(2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sb - sa))?;
            let tmp1 = (ca - cb).atan2(tmp0);
            Some([mod2pi(alpha - tmp1), p, mod2pi(tmp1 - beta)])
        }
        Word::Lsr => {
            let p = sqrt_nonneg(-2.0 + d * d + 2.0 * c_ab + 2.0 * d * (sa + sb))?;
            let tmp0 = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
            Some([mod2pi(tmp0 - alpha), p, mod2pi(tmp0 - mod2pi(beta))])
        }
        Word::Rsl => {
            let p = sqrt_nonneg(-2.0 + d * d + 2.0 * c_ab - 2.0 * d * (sa + sb))?;
            let tmp0 = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
            Some([mod2pi(alpha - tmp0), p, mod2pi(beta - tmp0)])
        }
        Word::Rlr => {
            let tmp0 = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sa - sb)) / 8.0;
            let phi = (ca - cb).atan2(d - sa + sb);
            let p = mod2pi(TAU - acos_checked(tmp0)?);
            let t = mod2pi(alpha - phi + mod2pi(p / 2.0));
            Some([t, p, mod2pi(alpha - beta - t + mod2pi(p))])
        }
        Word::Lrl => {
            let tmp0 = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sb - sa)) / 8.0;
            let phi = (ca - cb).atan2(d + sa - sb);
            let p = mod2pi(TAU - acos_checked(tmp0)?);
            let t = mod2pi(-alpha - phi + p / 2.0);
            Some([t, p, mod2pi(mod2pi(beta) - alpha - t + mod2pi(p))])
        }
    }
}

/// Planner settings shared by planar and 3D planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planner {
    pub turn_radius: f64,
    pub speed: f64,
    pub max_climb_rate: f64,
    #[serde(default)]
    pub denied: Vec<Word>,
}

impl Planner {
    pub fn new(turn_radius: f64, speed: f64) -> Result<Self, DubinsError> {
        if !(turn_radius > 0.0 && turn_radius.is_finite()) {
            return Err(DubinsError::TurnRadius {
                radius: turn_radius,
                min: 0.0,
            });
        }
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(DubinsError::Speed(speed));
        }
        Ok(Self {
            turn_radius,
            speed,
            max_climb_rate: f64::INFINITY,
            denied: Vec::new(),
        })
    }

    /// Transition planner for a fleet: turn radius, speed, climb cap and
    /// denied words all come from the configuration.
    pub fn from_config(config: &FleetConfig) -> Result<Self, DubinsError> {
        let min = config.min_turn_radius()?;
        let radius = config.transition_turn_radius();
        if radius < min {
            return Err(DubinsError::TurnRadius { radius, min });
        }
        Ok(Self {
            max_climb_rate: config.max_climb_rate,
            denied: config.denied_words.clone(),
            ..Self::new(radius, config.velocity)?
        })
    }

    /// Shortest allowed planar word between two poses at the same altitude.
    pub fn plan_2d(&self, start: &Pose3, goal: &Pose3) -> Result<DubinsPath3D, DubinsError> {
        if (start.h - goal.h).abs() > 1e-9 {
            return Err(DubinsError::AltitudeMismatch {
                start: start.h,
                goal: goal.h,
            });
        }
        self.shortest_planar(start, goal)
    }

    /// Planar word followed by the helix lift to the goal altitude.
    pub fn plan_3d(&self, start: &Pose3, goal: &Pose3) -> Result<DubinsPath3D, DubinsError> {
        let planar = self.shortest_planar(start, goal)?;
        Ok(self.lift(planar, goal.h - start.h))
    }

    fn shortest_planar(&self, start: &Pose3, goal: &Pose3) -> Result<DubinsPath3D, DubinsError> {
        let allowed: Vec<Word> = Word::ALL
            .into_iter()
            .filter(|w| !self.denied.contains(w))
            .collect();
        if allowed.is_empty() {
            return Err(DubinsError::AllWordsDenied);
        }
        let planar_goal = Pose3 { h: start.h, ..*goal };
        if start.horizontal_distance(goal) == 0.0 && start.heading == goal.heading {
            return Ok(DubinsPath3D {
                word: vec![MotionPrimitive::none()],
                start: *start,
                goal: planar_goal,
                length: 0.0,
                speed: self.speed,
                planar_word: None,
            });
        }
        let r = self.turn_radius;
        let best = allowed
            .into_iter()
            .filter_map(|w| word_parameters(w, start, goal, r).map(|p| (w, p)))
            .min_by(|a, b| a.1.iter().sum::<f64>().total_cmp(&b.1.iter().sum::<f64>()));
        // only reachable with a deny-list, since CSC words always exist
        let (word, params) = best.ok_or(DubinsError::AllWordsDenied)?;
        let mut segments: Vec<MotionPrimitive> = word
            .kinds()
            .iter()
            .zip(params)
            .filter(|(_, p)| *p > ZERO_SEGMENT)
            .map(|(&kind, p)| MotionPrimitive {
                kind,
                duration: p * r / self.speed,
                turn_radius: if kind.is_turn() { r } else { 0.0 },
                climb_rate: 0.0,
            })
            .collect();
        segments.push(MotionPrimitive::none());
        let length = params.iter().sum::<f64>() * r;
        Ok(DubinsPath3D {
            word: segments,
            start: *start,
            goal: planar_goal,
            length,
            speed: self.speed,
            planar_word: Some(word),
        })
    }

    /// Spreads the altitude change `dh` over the turning segments.
    fn lift(&self, mut path: DubinsPath3D, dh: f64) -> DubinsPath3D {
        path.goal.h = path.start.h + dh;
        if dh == 0.0 {
            return path;
        }
        let loop_time = TAU * self.turn_radius / self.speed;
        let turn_time: f64 = path.word.iter().filter(|m| m.kind.is_turn()).map(|m| m.duration).sum();
        let needed = dh.abs() / self.max_climb_rate;
        if turn_time < needed {
            let loops = ((needed - turn_time) / loop_time).ceil().max(1.0);
            match path.word.iter_mut().find(|m| m.kind.is_turn()) {
                Some(first) => first.duration += loops * loop_time,
                None => path.word.insert(
                    0,
                    MotionPrimitive {
                        kind: PrimitiveKind::L,
                        duration: loops * loop_time,
                        turn_radius: self.turn_radius,
                        climb_rate: 0.0,
                    },
                ),
            }
        }
        let turn_time: f64 = path.word.iter().filter(|m| m.kind.is_turn()).map(|m| m.duration).sum();
        let climb = dh / turn_time;
        for m in path.word.iter_mut() {
            match m.kind {
                PrimitiveKind::L | PrimitiveKind::Hl => {
                    m.kind = PrimitiveKind::Hl;
                    m.climb_rate = climb;
                }
                PrimitiveKind::R | PrimitiveKind::Hr => {
                    m.kind = PrimitiveKind::Hr;
                    m.climb_rate = climb;
                }
                _ => {}
            }
        }
        let v = self.speed;
        path.length = path
            .word
            .iter()
            .map(|m| m.duration * (v * v + m.climb_rate * m.climb_rate).sqrt())
            .sum();
        path
    }
}

/// Convenience wrapper: unrestricted planar planning.
pub fn plan_dubins_2d(start: &Pose3, goal: &Pose3, r_turn: f64, speed: f64) -> Result<DubinsPath3D, DubinsError> {
    Planner::new(r_turn, speed)?.plan_2d(start, goal)
}

/// Pose after flying `m` for `dt` seconds from `pose` at horizontal speed `v`.
fn advance(pose: Pose3, m: &MotionPrimitive, dt: f64, v: f64) -> Pose3 {
    let th = pose.heading;
    let h = pose.h + m.climb_rate * dt;
    match m.kind {
        PrimitiveKind::N => pose,
        PrimitiveKind::S => Pose3 {
            x: pose.x + v * dt * th.cos(),
            y: pose.y + v * dt * th.sin(),
            h,
            heading: th,
        },
        PrimitiveKind::L | PrimitiveKind::Hl => {
            let r = m.turn_radius;
            let th1 = th + v * dt / r;
            Pose3::new(
                pose.x + r * (th1.sin() - th.sin()),
                pose.y + r * (th.cos() - th1.cos()),
                h,
                th1,
            )
        }
        PrimitiveKind::R | PrimitiveKind::Hr => {
            let r = m.turn_radius;
            let th1 = th - v * dt / r;
            Pose3::new(
                pose.x + r * (th.sin() - th1.sin()),
                pose.y + r * (th1.cos() - th.cos()),
                h,
                th1,
            )
        }
    }
}

/// Pose at time `t` seconds after the start of `path`, clamped to its ends.
pub fn pose_at(path: &DubinsPath3D, t: f64) -> Pose3 {
    let mut pose = path.start;
    let mut remaining = t.max(0.0);
    for m in &path.word {
        if remaining <= m.duration {
            return advance(pose, m, remaining, path.speed);
        }
        pose = advance(pose, m, m.duration, path.speed);
        remaining -= m.duration;
    }
    pose
}

/// Poses at `0, dt, 2dt, …` and at the final time.
pub fn sample_path(path: &DubinsPath3D, dt: f64) -> Result<Vec<Pose3>, DubinsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DubinsError::Step(dt));
    }
    let total = path.duration();
    let n = (total / dt).floor() as usize;
    let mut poses: Vec<Pose3> = (0..=n).map(|k| pose_at(path, k as f64 * dt)).collect();
    if total - n as f64 * dt > 1e-12 * total.max(1.0) {
        poses.push(pose_at(path, total));
    }
    Ok(poses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPlan {
    pub uav: UavId,
    pub break_off: Pose3,
    pub break_off_time: f64,
    pub join_in: Pose3,
    pub join_in_time: f64,
    pub path: DubinsPath3D,
    pub target_level: u8,
    pub target_circle: Circle,
    /// `|wrap(join-in angle − level phase at arrival)|`.
    pub phase_error: f64,
}

/// Grid sizes for the synchronized join-in search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncSearch {
    pub break_off_samples: usize,
    pub angle_samples: usize,
    pub refine_samples: usize,
}

impl Default for SyncSearch {
    fn default() -> Self {
        Self {
            break_off_samples: 160,
            angle_samples: 240,
            refine_samples: 32,
        }
    }
}

struct Candidate {
    break_off_time: f64,
    theta: f64,
    path: DubinsPath3D,
    residual: f64,
}

/// Plans a phase-synchronized transfer of a loitering agent onto
/// `target_circle` at `target_level`, starting no earlier than `now`.
pub fn plan_level_transition(
    current: &UavState,
    target_circle: Circle,
    target_level: u8,
    level_phase_at: &dyn Fn(f64) -> f64,
    now: f64,
    config: &FleetConfig,
) -> Result<TransitionPlan, DubinsError> {
    plan_level_transition_with(
        current,
        target_circle,
        target_level,
        level_phase_at,
        now,
        config,
        SyncSearch::default(),
    )
}

pub fn plan_level_transition_with(
    current: &UavState,
    target_circle: Circle,
    target_level: u8,
    level_phase_at: &dyn Fn(f64) -> f64,
    now: f64,
    config: &FleetConfig,
    search: SyncSearch,
) -> Result<TransitionPlan, DubinsError> {
    if !current.is_loitering() {
        return Err(DubinsError::NotLoitering(current.id));
    }
    if current.level.abs_diff(target_level) > 1 {
        return Err(DubinsError::LevelGap {
            from: current.level,
            to: target_level,
        });
    }
    let planner = Planner::from_config(config)?;
    let target_h = altitude_for_level(target_level, config)?;
    let v = config.velocity;
    let omega0 = v / current.loiter_circle.radius;
    let break_pose = |t_b: f64| {
        loiter_pose(
            &current.loiter_circle,
            current.altitude,
            current.phase + omega0 * (t_b - now),
        )
    };
    let join_pose = |theta: f64| loiter_pose(&target_circle, target_h, theta);
    let finish = |c: Candidate| {
        let join_in_time = c.break_off_time + c.path.duration();
        TransitionPlan {
            uav: current.id,
            break_off: c.path.start,
            break_off_time: c.break_off_time,
            join_in: join_pose(c.theta),
            join_in_time,
            path: c.path,
            target_level,
            target_circle,
            phase_error: c.residual.abs(),
        }
    };

    // already on the target circle and in step with its clock
    let here = break_pose(now);
    let on_target = current.loiter_circle == target_circle && (current.altitude - target_h).abs() < 1e-9;
    if on_target && angle_distance_ok(current.phase, level_phase_at(now)) {
        let path = planner.plan_3d(&here, &here)?;
        return Ok(finish(Candidate {
            break_off_time: now,
            theta: current.phase,
            path,
            residual: wrap_pi(level_phase_at(now) - current.phase),
        }));
    }

    let residual = |t_b: f64, theta: f64| -> Result<(f64, DubinsPath3D), DubinsError> {
        let path = planner.plan_3d(&break_pose(t_b), &join_pose(theta))?;
        let g = wrap_pi(level_phase_at(t_b + path.duration()) - theta);
        Ok((g, path))
    };
    let roots_at = |t_b: f64| -> Result<Option<Candidate>, DubinsError> {
        let m = search.angle_samples;
        let mut best: Option<Candidate> = None;
        let mut prev = residual(t_b, 0.0)?.0;
        for k in 1..=m {
            let (a, b) = (TAU * (k - 1) as f64 / m as f64, TAU * k as f64 / m as f64);
            let g = residual(t_b, b)?.0;
            let bracket = prev.signum() != g.signum() || g == 0.0;
            // a wrap of the residual through ±π is not a root
            if bracket && prev.abs() < FRAC_PI_2 && g.abs() < FRAC_PI_2 {
                let (mut lo, mut hi, mut g_lo) = (a, b, prev);
                for _ in 0..80 {
                    if hi - lo < 1e-13 {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    let g_mid = residual(t_b, mid)?.0;
                    if g_mid == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if g_mid.signum() == g_lo.signum() {
                        lo = mid;
                        g_lo = g_mid;
                    } else {
                        hi = mid;
                    }
                }
                let theta = 0.5 * (lo + hi);
                let (g_root, path) = residual(t_b, theta)?;
                if g_root.abs() < SYNC_TOLERANCE && best.as_ref().is_none_or(|c| path.length < c.path.length) {
                    best = Some(Candidate {
                        break_off_time: t_b,
                        theta: normalize_angle(theta),
                        path,
                        residual: g_root,
                    });
                }
            }
            prev = g;
        }
        Ok(best)
    };

    let horizon = TAU * target_circle.radius / v;
    let n = search.break_off_samples.max(2);
    let grid: Vec<f64> = (0..n).map(|i| now + horizon * i as f64 / n as f64).collect();
    let mut best: Option<(usize, Candidate)> = None;
    for (i, &t_b) in grid.iter().enumerate() {
        if let Some(c) = roots_at(t_b)? {
            if best.as_ref().is_none_or(|(_, b)| shorter(&c, b)) {
                best = Some((i, c));
            }
        }
    }
    let (index, mut chosen) = best.ok_or(DubinsError::Unsynchronizable(current.id))?;
    let step = horizon / n as f64;
    let lo = (grid[index] - step).max(now);
    let hi = grid[index] + step;
    for j in 0..=search.refine_samples {
        let t_b = lo + (hi - lo) * j as f64 / search.refine_samples.max(1) as f64;
        if let Some(c) = roots_at(t_b)? {
            if shorter(&c, &chosen) {
                chosen = c;
            }
        }
    }
    Ok(finish(chosen))
}

fn angle_distance_ok(a: f64, b: f64) -> bool {
    wrap_pi(a - b).abs() < SYNC_TOLERANCE
}

/// Strictly shorter, or equally long and breaking off earlier.
fn shorter(a: &Candidate, b: &Candidate) -> bool {
    let tol = 1e-9 * b.path.length.max(1.0);
    a.path.length < b.path.length - tol
        || ((a.path.length - b.path.length).abs() <= tol && a.break_off_time < b.break_off_time)
}

/// Largest turning rate of a path's horizontal projection, rad per metre.
pub fn max_curvature(path: &DubinsPath3D) -> f64 {
    path.word
        .iter()
        .filter(|m| m.kind.is_turn() && m.duration > 0.0)
        .map(|m| 1.0 / m.turn_radius)
        .fold(0.0, f64::max)
}

/// Counter-clockwise heading of a loiter circle at angle `phase`.
pub fn loiter_heading(phase: f64) -> f64 {
    normalize_angle(phase + FRAC_PI_2)
}
