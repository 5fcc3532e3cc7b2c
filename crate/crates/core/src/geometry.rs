//! Planar and 3D primitives shared by every other module: points, poses,
//! polygons, circles, containment and overlap areas.
//!
//! Orientation tests go through exact adaptive-precision predicates so that
//! lattice vertices lying exactly on a polygon edge classify consistently.

use std::f64::consts::{PI, TAU};

use robust::Coord;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("invalid circle radius {0}")]
    InvalidRadius(f64),
    #[error("invalid sampling resolution {resolution} (must be > 0 and <= radius {radius})")]
    InvalidResolution { resolution: f64, radius: f64 },
    #[error("invalid square side {0}")]
    InvalidSide(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Point at `radius` from `self` in direction `angle`.
    pub fn polar(self, radius: f64, angle: f64) -> Point2 {
        Point2::new(self.x + radius * angle.cos(), self.y + radius * angle.sin())
    }

    fn coord(self) -> Coord<f64> {
        Coord { x: self.x, y: self.y }
    }
}

/// Position, altitude and heading of an agent. Heading is kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose3 {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub heading: f64,
}

impl Pose3 {
    pub fn new(x: f64, y: f64, h: f64, heading: f64) -> Self {
        debug_assert!(h >= 0.0, "negative altitude {h}");
        Self {
            x,
            y,
            h,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn horizontal_distance(&self, other: &Pose3) -> f64 {
        self.position().distance(other.position())
    }

    pub fn distance_3d(&self, other: &Pose3) -> f64 {
        let dz = self.h - other.h;
        (self.horizontal_distance(other).powi(2) + dz * dz).sqrt()
    }
}

/// Maps any finite angle to `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Maps any finite angle to `(-π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    let r = normalize_angle(a);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Smallest absolute difference between two angles.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    wrap_pi(a - b).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Point2, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    pub fn point_at(&self, angle: f64) -> Point2 {
        self.center.polar(self.radius, angle)
    }
}

/// A simple polygon, closed implicitly from the last vertex back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonXy", into = "PolygonXy")]
pub struct Polygon {
    vertices: Vec<Point2>,
}

/// Wire form of a polygon: parallel coordinate arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonXy {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TryFrom<PolygonXy> for Polygon {
    type Error = GeometryError;

    fn try_from(xy: PolygonXy) -> Result<Self, Self::Error> {
        Polygon::from_xy(&xy.x, &xy.y)
    }
}

impl From<Polygon> for PolygonXy {
    fn from(poly: Polygon) -> Self {
        PolygonXy {
            x: poly.vertices.iter().map(|p| p.x).collect(),
            y: poly.vertices.iter().map(|p| p.y).collect(),
        }
    }
}

impl Polygon {
    /// Repeated consecutive vertices (including an explicit closing copy of
    /// the first vertex) are collapsed before validation.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        vertices.dedup();
        while vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::InvalidPolygon(format!(
                "non-finite vertex ({}, {})",
                p.x, p.y
            )));
        }
        let poly = Self { vertices };
        if poly.signed_area() == 0.0 {
            return Err(GeometryError::InvalidPolygon("zero area".into()));
        }
        if let Some((i, j)) = poly.first_self_intersection() {
            return Err(GeometryError::InvalidPolygon(format!(
                "edges {i} and {j} intersect"
            )));
        }
        Ok(poly)
    }

    pub fn from_xy(xs: &[f64], ys: &[f64]) -> Result<Self, GeometryError> {
        if xs.len() != ys.len() {
            return Err(GeometryError::InvalidPolygon(format!(
                "x has {} coordinates but y has {}",
                xs.len(),
                ys.len()
            )));
        }
        Self::new(xs.iter().zip(ys).map(|(&x, &y)| Point2::new(x, y)).collect())
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area, positive for counter-clockwise vertex order.
    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>() / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut min = self.vertices[0];
        let mut max = self.vertices[0];
        for p in &self.vertices[1..] {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        (min, max)
    }

    /// Boundary points count as inside.
    pub fn contains(&self, p: Point2) -> bool {
        point_in_polygon(p, self)
    }

    pub fn on_boundary(&self, p: Point2) -> bool {
        self.edges().any(|(a, b)| on_segment(p, a, b))
    }

    pub fn distance_to_boundary(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    fn first_self_intersection(&self) -> Option<(usize, usize)> {
        let n = self.vertices.len();
        let v = &self.vertices;
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            for j in (i + 1)..n {
                let (c, d) = (v[j], v[(j + 1) % n]);
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // shared endpoint is fine; collinear fold-back is not
                    let (shared, p, q) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                    if orient(p, shared, q) == 0.0 && dot(p, shared, q) > 0.0 {
                        return Some((i, j));
                    }
                } else if segments_intersect(a, b, c, d) {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

fn dot(p: Point2, shared: Point2, q: Point2) -> f64 {
    (p.x - shared.x) * (q.x - shared.x) + (p.y - shared.y) * (q.y - shared.y)
}

/// Exact orientation: positive when `a, b, c` turn counter-clockwise.
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    robust::orient2d(a.coord(), b.coord(), c.coord())
}

/// True when `p` lies on the closed segment `ab`.
pub fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    orient(a, b, p) == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    (o1 == 0.0 && on_segment(c, a, b))
        || (o2 == 0.0 && on_segment(d, a, b))
        || (o3 == 0.0 && on_segment(a, c, d))
        || (o4 == 0.0 && on_segment(b, c, d))
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len_sq = dx * dx + dy * dy;
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len_sq).clamp(0.0, 1.0);
    p.distance(Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Winding-number containment with an exact boundary check first; points on
/// the boundary are inside.
pub fn point_in_polygon(p: Point2, poly: &Polygon) -> bool {
    let mut winding = 0i32;
    for (a, b) in poly.edges() {
        if on_segment(p, a, b) {
            return true;
        }
        if a.y <= p.y {
            if b.y > p.y && orient(a, b, p) > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && orient(a, b, p) < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

/// Exact area of the intersection of two discs.
pub fn circle_overlap_area(c1: &Circle, c2: &Circle) -> f64 {
    // fixed argument order keeps the result bit-for-bit symmetric
    let (r1, r2) = if c1.radius <= c2.radius {
        (c1.radius, c2.radius)
    } else {
        (c2.radius, c1.radius)
    };
    let d = c1.center.distance(c2.center);
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let cos1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0);
    let cos2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0);
    let kite = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
    r1 * r1 * cos1.acos() + r2 * r2 * cos2.acos() - 0.5 * kite.max(0.0).sqrt()
}

/// Stratified sample counts of a disc against a polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscSampling {
    pub inside: usize,
    pub total: usize,
}

impl DiscSampling {
    pub fn fraction_inside(&self) -> f64 {
        self.inside as f64 / self.total as f64
    }

    pub fn fraction_outside(&self) -> f64 {
        1.0 - self.fraction_inside()
    }
}

/// Counts cell-centred lattice samples of the disc that fall inside `poly`.
/// The lattice spacing is the largest value `<= resolution` that divides the
/// disc diameter evenly.
pub fn sample_disc(
    c: &Circle,
    poly: &Polygon,
    resolution: f64,
) -> Result<DiscSampling, GeometryError> {
    if !(resolution > 0.0 && resolution <= c.radius) {
        return Err(GeometryError::InvalidResolution {
            resolution,
            radius: c.radius,
        });
    }
    let n = (2.0 * c.radius / resolution).ceil() as usize;
    let step = 2.0 * c.radius / n as f64;
    let r_sq = c.radius * c.radius;
    let (mut inside, mut total) = (0usize, 0usize);
    for j in 0..n {
        let dy = -c.radius + (j as f64 + 0.5) * step;
        for i in 0..n {
            let dx = -c.radius + (i as f64 + 0.5) * step;
            if dx * dx + dy * dy > r_sq {
                continue;
            }
            total += 1;
            if poly.contains(Point2::new(c.center.x + dx, c.center.y + dy)) {
                inside += 1;
            }
        }
    }
    Ok(DiscSampling { inside, total })
}

/// Area of `poly` inside the axis-aligned square at `center`, by clipping the
/// polygon against each side of the square in turn.
pub fn square_overlap_area(poly: &Polygon, center: Point2, side: f64) -> f64 {
    let h = side / 2.0;
    let mut ring: Vec<Point2> = poly.vertices().to_vec();
    // (axis, sign, bound): keep points with sign * coord <= bound
    let planes = [
        (0, 1.0, center.x + h),
        (0, -1.0, -(center.x - h)),
        (1, 1.0, center.y + h),
        (1, -1.0, -(center.y - h)),
    ];
    for (axis, sign, bound) in planes {
        if ring.is_empty() {
            break;
        }
        let value = |p: &Point2| sign * if axis == 0 { p.x } else { p.y } - bound;
        let mut out = Vec::with_capacity(ring.len() + 4);
        for k in 0..ring.len() {
            let a = ring[k];
            let b = ring[(k + 1) % ring.len()];
            let (va, vb) = (value(&a), value(&b));
            if va <= 0.0 {
                out.push(a);
            }
            if (va < 0.0 && vb > 0.0) || (va > 0.0 && vb < 0.0) {
                let t = va / (va - vb);
                out.push(Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
            }
        }
        ring = out;
    }
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|k| {
            let (a, b) = (ring[k], ring[(k + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum();
    (twice / 2.0).abs()
}

/// Fraction of the disc lying outside `poly`, from deterministic grid sampling.
pub fn circle_fraction_outside(
    c: &Circle,
    poly: &Polygon,
    resolution: f64,
) -> Result<f64, GeometryError> {
    sample_disc(c, poly, resolution).map(|s| s.fraction_outside())
}

/// Corners of an axis-aligned square, counter-clockwise from the lower left.
pub fn square_vertices(center: Point2, side: f64) -> Result<[Point2; 4], GeometryError> {
    if !(side > 0.0 && side.is_finite()) {
        return Err(GeometryError::InvalidSide(side));
    }
    let h = side / 2.0;
    Ok([
        Point2::new(center.x - h, center.y - h),
        Point2::new(center.x + h, center.y - h),
        Point2::new(center.x + h, center.y + h),
        Point2::new(center.x - h, center.y + h),
    ])
}
