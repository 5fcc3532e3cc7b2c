//! Independent reference computations for the integration tests.
#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use loiter_core::geometry::{Point2, Polygon, Pose3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn wrap_turn(a: f64) -> f64 {
    let v = a.rem_euclid(TAU);
    if v > TAU - 1e-9 {
        0.0
    } else {
        v
    }
}

fn angle_of(v: (f64, f64)) -> f64 {
    v.1.atan2(v.0)
}

fn left_center(p: &Pose3, r: f64) -> (f64, f64) {
    (p.x - r * p.heading.sin(), p.y + r * p.heading.cos())
}

fn right_center(p: &Pose3, r: f64) -> (f64, f64) {
    (p.x + r * p.heading.sin(), p.y - r * p.heading.cos())
}

/// Planar lengths of the six words in the order LSL, RSR, LSR, RSL, RLR, LRL,
/// from explicit tangent-line and tangent-circle constructions. CCC words
/// keep the solution whose middle arc is longer than a half turn.
pub fn dubins_word_lengths(start: &Pose3, goal: &Pose3, r: f64) -> [Option<f64>; 6] {
    let (t0, t1) = (start.heading, goal.heading);
    let sub = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0, b.1 - a.1);
    let norm = |v: (f64, f64)| v.0.hypot(v.1);

    let lsl = {
        let v = sub(left_center(start, r), left_center(goal, r));
        let psi = angle_of(v);
        Some(r * wrap_turn(psi - t0) + norm(v) + r * wrap_turn(t1 - psi))
    };
    let rsr = {
        let v = sub(right_center(start, r), right_center(goal, r));
        let psi = angle_of(v);
        Some(r * wrap_turn(t0 - psi) + norm(v) + r * wrap_turn(psi - t1))
    };
    let lsr = {
        let v = sub(left_center(start, r), right_center(goal, r));
        let d = norm(v);
        (d >= 2.0 * r).then(|| {
            let s = (d * d - 4.0 * r * r).max(0.0).sqrt();
            let psi = angle_of(v) + (2.0 * r).atan2(s);
            r * wrap_turn(psi - t0) + s + r * wrap_turn(psi - t1)
        })
    };
    let rsl = {
        let v = sub(right_center(start, r), left_center(goal, r));
        let d = norm(v);
        (d >= 2.0 * r).then(|| {
            let s = (d * d - 4.0 * r * r).max(0.0).sqrt();
            let psi = angle_of(v) - (2.0 * r).atan2(s);
            r * wrap_turn(t0 - psi) + s + r * wrap_turn(t1 - psi)
        })
    };
    // CCC: a middle circle tangent to both end circles
    let ccc = |c1: (f64, f64), c2: (f64, f64), first_left: bool| -> Option<f64> {
        let v = sub(c1, c2);
        let d = norm(v);
        if d > 4.0 * r || d < 1e-12 {
            return None;
        }
        let h = (4.0 * r * r - d * d / 4.0).max(0.0).sqrt();
        let mid = (c1.0 + v.0 / 2.0, c1.1 + v.1 / 2.0);
        let perp = (-v.1 / d, v.0 / d);
        let mut best: Option<f64> = None;
        for sign in [1.0, -1.0] {
            let c3 = (mid.0 + sign * h * perp.0, mid.1 + sign * h * perp.1);
            let p1 = ((c1.0 + c3.0) / 2.0, (c1.1 + c3.1) / 2.0);
            let p2 = ((c2.0 + c3.0) / 2.0, (c2.1 + c3.1) / 2.0);
            let (a1, a2, a3, ok);
            if first_left {
                let psi1 = angle_of(sub(c1, p1)) + FRAC_PI_2;
                let psi2 = angle_of(sub(c2, p2)) + FRAC_PI_2;
                a1 = wrap_turn(psi1 - t0);
                a2 = wrap_turn(psi1 - psi2);
                a3 = wrap_turn(t1 - psi2);
                ok = a2 > PI;
            } else {
                let psi1 = angle_of(sub(c1, p1)) - FRAC_PI_2;
                let psi2 = angle_of(sub(c2, p2)) - FRAC_PI_2;
                a1 = wrap_turn(t0 - psi1);
                a2 = wrap_turn(psi2 - psi1);
                a3 = wrap_turn(psi2 - t1);
                ok = a2 > PI;
            }
            if ok {
                let len = r * (a1 + a2 + a3);
                best = Some(best.map_or(len, |b: f64| b.min(len)));
            }
        }
        best
    };
    let rlr = ccc(right_center(start, r), right_center(goal, r), false);
    let lrl = ccc(left_center(start, r), left_center(goal, r), true);
    [lsl, rsr, lsr, rsl, rlr, lrl]
}

pub fn dubins_shortest(start: &Pose3, goal: &Pose3, r: f64) -> f64 {
    dubins_word_lengths(start, goal, r)
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min)
}

/// Lens area by midpoint sampling of `n × n` cells over the intersection of
/// the two bounding boxes.
pub fn lens_area_sampled(c1: Point2, r1: f64, c2: Point2, r2: f64, n: usize) -> f64 {
    let x0 = (c1.x - r1).max(c2.x - r2);
    let x1 = (c1.x + r1).min(c2.x + r2);
    let y0 = (c1.y - r1).max(c2.y - r2);
    let y1 = (c1.y + r1).min(c2.y + r2);
    if x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let (r1s, r2s) = (r1 * r1, r2 * r2);
    let mut hits = 0u64;
    for j in 0..n {
        let y = y0 + (j as f64 + 0.5) * dy;
        let (ey1, ey2) = ((y - c1.y).powi(2), (y - c2.y).powi(2));
        if ey1 > r1s || ey2 > r2s {
            continue;
        }
        for i in 0..n {
            let x = x0 + (i as f64 + 0.5) * dx;
            if (x - c1.x).powi(2) + ey1 <= r1s && (x - c2.x).powi(2) + ey2 <= r2s {
                hits += 1;
            }
        }
    }
    hits as f64 * dx * dy
}

/// Even-odd crossing count written independently of the library.
pub fn crossing_inside(p: Point2, vertices: &[Point2]) -> bool {
    let mut inside = false;
    let n = vertices.len();
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Scanline rasterization of a polygon at `cell` metres.
pub struct Raster {
    origin: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    filled: Vec<bool>,
}

impl Raster {
    pub fn new(poly: &Polygon, cell: f64) -> Self {
        let (lo, hi) = poly.bounding_box();
        let origin = Point2::new(lo.x - cell, lo.y - cell);
        let nx = ((hi.x - origin.x) / cell).ceil() as usize + 2;
        let ny = ((hi.y - origin.y) / cell).ceil() as usize + 2;
        let mut filled = vec![false; nx * ny];
        let v = poly.vertices();
        for j in 0..ny {
            let y = origin.y + (j as f64 + 0.5) * cell;
            let mut xs: Vec<f64> = Vec::new();
            for i in 0..v.len() {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                if (a.y > y) != (b.y > y) {
                    xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks(2) {
                if let [xa, xb] = pair {
                    for i in 0..nx {
                        let x = origin.x + (i as f64 + 0.5) * cell;
                        if *xa < x && x < *xb {
                            filled[j * nx + i] = true;
                        }
                    }
                }
            }
        }
        Self {
            origin,
            cell,
            nx,
            ny,
            filled,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        let i = ((p.x - self.origin.x) / self.cell).floor();
        let j = ((p.y - self.origin.y) / self.cell).floor();
        if i < 0.0 || j < 0.0 || i as usize >= self.nx || j as usize >= self.ny {
            return false;
        }
        self.filled[j as usize * self.nx + i as usize]
    }
}

/// Star-shaped polygon with `n` vertices around `center`.
pub fn random_star_polygon(rng: &mut ChaCha8Rng, center: Point2, r_min: f64, r_max: f64, n: usize) -> Polygon {
    let mut angles: Vec<f64> = (0..n).map(|k| (k as f64 + rng.gen_range(0.1..0.9)) * TAU / n as f64).collect();
    angles.sort_by(f64::total_cmp);
    let vertices = angles
        .iter()
        .map(|a| {
            let r = rng.gen_range(r_min..r_max);
            Point2::new(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect();
    Polygon::new(vertices).expect("star polygon is simple")
}

/// Area of `disc ∩ poly` minus the listed lens areas, by midpoint sampling of
/// `n × n` cells over the disc's bounding box.
pub fn effective_coverage_sampled(center: Point2, r: f64, others: &[(Point2, f64)], poly: &Polygon, n: usize) -> f64 {
    let cell = 2.0 * r / n as f64;
    let mut inside = 0u64;
    let mut lens = 0u64;
    for j in 0..n {
        for i in 0..n {
            let p = Point2::new(center.x - r + (i as f64 + 0.5) * cell, center.y - r + (j as f64 + 0.5) * cell);
            if p.distance(center) > r {
                continue;
            }
            if crossing_inside(p, poly.vertices()) {
                inside += 1;
            }
            lens += others.iter().filter(|(c, rr)| p.distance(*c) <= *rr).count() as u64;
        }
    }
    (inside as f64 - lens as f64) * cell * cell
}

/// Distance from `p` to the nearest polygon edge.
pub fn boundary_distance(p: Point2, vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            p.distance(Point2::new(a.x + t * dx, a.y + t * dy))
        })
        .fold(f64::INFINITY, f64::min)
}
