//! Minimal SVG writer and the figure renderers built on it.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use loiter_core::dubins::{sample_path, DubinsPath3D, TransitionPlan};
use loiter_core::fleet::UavState;
use loiter_core::geometry::{Circle, Point2, Polygon, Pose3};
use loiter_core::packing::{Packing, SquareId};

const WIDTH_PX: f64 = 800.0;
const MARGIN_PX: f64 = 20.0;

pub const BLACK: &str = "#000000";
pub const GRAY: &str = "#9a9a9a";
pub const LIGHT_GRAY: &str = "#d0d0d0";
pub const RED: &str = "#d62728";
pub const BROWN: &str = "#8b4513";
pub const BLUE: &str = "#1f5fbf";

/// Stroke colours for altitude levels 1 to 4.
const LEVEL_COLORS: [&str; 4] = [RED, BLUE, "#2ca02c", "#9467bd"];

pub fn level_color(level: u8) -> &'static str {
    LEVEL_COLORS[(level.clamp(1, 4) - 1) as usize]
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Style<'a> {
    pub stroke: Option<&'a str>,
    pub fill: Option<&'a str>,
    pub width: f64,
    pub dashed: bool,
    pub opacity: Option<f64>,
}

impl<'a> Style<'a> {
    pub fn stroke(color: &'a str, width: f64) -> Self {
        Self {
            stroke: Some(color),
            width,
            ..Self::default()
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }

    pub fn fill(mut self, color: &'a str, opacity: f64) -> Self {
        self.fill = Some(color);
        self.opacity = Some(opacity);
        self
    }

    fn attrs(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, " fill=\"{}\"", self.fill.unwrap_or("none"));
        if let Some(o) = self.opacity {
            let _ = write!(s, " fill-opacity=\"{o:.2}\"");
        }
        match self.stroke {
            Some(c) => {
                let _ = write!(s, " stroke=\"{c}\" stroke-width=\"{:.2}\"", self.width);
            }
            None => s.push_str(" stroke=\"none\""),
        }
        if self.dashed {
            s.push_str(" stroke-dasharray=\"6 4\"");
        }
        s
    }
}

/// World-to-pixel canvas with the y axis pointing up.
pub struct Canvas {
    min: Point2,
    max: Point2,
    scale: f64,
    body: String,
}

impl Canvas {
    pub fn new(min: Point2, max: Point2) -> Self {
        let span = (max.x - min.x).max(max.y - min.y).max(1e-9);
        Self {
            min,
            max,
            scale: (WIDTH_PX - 2.0 * MARGIN_PX) / span,
            body: String::new(),
        }
    }

    /// Canvas covering `points` plus `pad` metres on every side.
    pub fn fitting(points: impl IntoIterator<Item = Point2>, pad: f64) -> Self {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min = Point2::new(min.x.min(p.x), min.y.min(p.y));
            max = Point2::new(max.x.max(p.x), max.y.max(p.y));
        }
        if !min.is_finite() {
            min = Point2::new(0.0, 0.0);
            max = Point2::new(1.0, 1.0);
        }
        Self::new(Point2::new(min.x - pad, min.y - pad), Point2::new(max.x + pad, max.y + pad))
    }

    fn px(&self, p: Point2) -> (f64, f64) {
        (
            MARGIN_PX + (p.x - self.min.x) * self.scale,
            MARGIN_PX + (self.max.y - p.y) * self.scale,
        )
    }

    pub fn polygon(&mut self, points: &[Point2], style: Style) {
        let pts: Vec<String> = points
            .iter()
            .map(|p| {
                let (x, y) = self.px(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(self.body, "<polygon points=\"{}\"{}/>", pts.join(" "), style.attrs());
    }

    pub fn polyline(&mut self, points: &[Point2], style: Style) {
        let pts: Vec<String> = points
            .iter()
            .map(|p| {
                let (x, y) = self.px(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(self.body, "<polyline points=\"{}\"{}/>", pts.join(" "), style.attrs());
    }

    pub fn circle(&mut self, c: &Circle, style: Style) {
        let (x, y) = self.px(c.center);
        let _ = writeln!(
            self.body,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{:.2}\"{}/>",
            c.radius * self.scale,
            style.attrs()
        );
    }

    pub fn square(&mut self, center: Point2, side: f64, style: Style) {
        let h = side / 2.0;
        let corners = [
            Point2::new(center.x - h, center.y - h),
            Point2::new(center.x + h, center.y - h),
            Point2::new(center.x + h, center.y + h),
            Point2::new(center.x - h, center.y + h),
        ];
        self.polygon(&corners, style);
    }

    /// Arrow of `length` metres from the pose along its heading.
    pub fn arrow(&mut self, pose: &Pose3, length: f64, color: &str) {
        let tip = pose.position().polar(length, pose.heading);
        let head = length * 0.35;
        let left = tip.polar(head, pose.heading + 2.6);
        let right = tip.polar(head, pose.heading - 2.6);
        self.polyline(&[pose.position(), tip], Style::stroke(color, 1.5));
        self.polygon(&[tip, left, right], Style::stroke(color, 1.0).fill(color, 1.0));
    }

    pub fn text(&mut self, at: Point2, size_px: f64, text: &str) {
        let (x, y) = self.px(at);
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"{size_px:.1}\">{}</text>",
            escape(text)
        );
    }

    pub fn finish(self) -> String {
        let w = 2.0 * MARGIN_PX + (self.max.x - self.min.x) * self.scale;
        let h = 2.0 * MARGIN_PX + (self.max.y - self.min.y) * self.scale;
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">\n\
             <rect x=\"0\" y=\"0\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"#ffffff\"/>\n{}</svg>\n",
            self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn area_canvas(poly: &Polygon, packing: &Packing) -> Canvas {
    let b = packing.bounding;
    let corners = [b.min_corner, Point2::new(b.min_corner.x + b.side, b.min_corner.y + b.side)];
    Canvas::fitting(poly.vertices().iter().copied().chain(corners), b.side * 0.02)
}

fn draw_outline(canvas: &mut Canvas, poly: &Polygon) {
    canvas.polygon(poly.vertices(), Style::stroke(BLACK, 2.0));
}

fn draw_base_squares(canvas: &mut Canvas, packing: &Packing) {
    for id in &packing.base_squares {
        let sq = packing.square(*id);
        canvas.square(sq.center, sq.side, Style::stroke(GRAY, 1.0).dashed());
    }
}

/// Area outline, base squares and deployment circles.
pub fn render_deployment(poly: &Polygon, packing: &Packing, fleet: &[UavState]) -> String {
    let mut canvas = area_canvas(poly, packing);
    draw_base_squares(&mut canvas, packing);
    for a in fleet.iter().filter(|a| a.is_live()) {
        canvas.circle(&a.loiter_circle, Style::stroke(level_color(a.level), 1.2));
    }
    draw_outline(&mut canvas, poly);
    canvas.finish()
}

/// Squares marked by recovery stage: failed in brown, survivors in gray and
/// recovery targets in blue. Circles are drawn for `circles` when given.
pub fn render_frame(
    poly: &Polygon,
    packing: &Packing,
    failed: &BTreeSet<SquareId>,
    recovery: &BTreeSet<SquareId>,
    circles: Option<&[UavState]>,
    title: &str,
) -> String {
    let mut canvas = area_canvas(poly, packing);
    for id in &packing.base_squares {
        let sq = packing.square(*id);
        let style = if failed.contains(id) {
            Style::stroke(BROWN, 1.0).fill(BROWN, 0.85)
        } else {
            Style::stroke(GRAY, 1.0).fill(LIGHT_GRAY, 0.8)
        };
        canvas.square(sq.center, sq.side, style);
    }
    for id in recovery {
        let sq = packing.square(*id);
        canvas.square(sq.center, sq.side, Style::stroke(BLUE, 2.0).fill(BLUE, 0.25));
    }
    if let Some(fleet) = circles {
        for a in fleet.iter().filter(|a| a.is_live()) {
            canvas.circle(&a.loiter_circle, Style::stroke(level_color(a.level), 1.2));
        }
    }
    draw_outline(&mut canvas, poly);
    let b = packing.bounding;
    canvas.text(Point2::new(b.min_corner.x, b.min_corner.y + b.side), 14.0, title);
    canvas.finish()
}

fn path_points(path: &DubinsPath3D) -> Vec<Point2> {
    let dt = (path.duration() / 400.0).max(0.05);
    sample_path(path, dt)
        .map(|poses| poses.iter().map(Pose3::position).collect())
        .unwrap_or_default()
}

/// Transition paths over the area, with heading arrows at break-off and join-in.
pub fn render_transitions(poly: &Polygon, packing: &Packing, plans: &[TransitionPlan]) -> String {
    let mut canvas = area_canvas(poly, packing);
    draw_base_squares(&mut canvas, packing);
    draw_outline(&mut canvas, poly);
    let arrow = packing.config.r_l_min * 0.4;
    for plan in plans {
        let color = level_color(plan.target_level);
        canvas.circle(&plan.target_circle, Style::stroke(color, 1.0).dashed());
        canvas.polyline(&path_points(&plan.path), Style::stroke(color, 1.5));
        canvas.arrow(&plan.break_off, arrow, BLACK);
        canvas.arrow(&plan.join_in, arrow, color);
    }
    canvas.finish()
}

/// One planned path with optional start and goal circles.
pub fn render_path(path: &DubinsPath3D, circles: &[(Circle, u8)]) -> String {
    let points = path_points(path);
    let extent = circles.iter().flat_map(|(c, _)| {
        [
            Point2::new(c.center.x - c.radius, c.center.y - c.radius),
            Point2::new(c.center.x + c.radius, c.center.y + c.radius),
        ]
    });
    let mut canvas = Canvas::fitting(points.iter().copied().chain(extent), 20.0);
    for (c, level) in circles {
        canvas.circle(c, Style::stroke(level_color(*level), 1.0).dashed());
    }
    canvas.polyline(&points, Style::stroke(BLACK, 1.5));
    let arrow = (path.length / 15.0).clamp(5.0, 40.0);
    canvas.arrow(&path.start, arrow, RED);
    canvas.arrow(&path.goal, arrow, BLUE);
    canvas.finish()
}
