//! Per-cycle coverage, effective coverage and the full-coverage check.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::{coverage_radius, quality, UavId, UavState};
use crate::geometry::{circle_fraction_outside, circle_overlap_area, GeometryError, Point2, Polygon};
use crate::packing::{ConfigError, FleetConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// At most this many uncovered points are listed in a report.
pub const MAX_LISTED_UNCOVERED: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("grid resolution {resolution} m must be in (0, {max}] (r_l_min / 10)")]
    Resolution { resolution: f64, max: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Inner and outer radius of the ring swept by an agent's footprint over one
/// loiter cycle.
pub fn cycle_ring(agent: &UavState, fov_half_angle: f64) -> (f64, f64) {
    let r_l = agent.loiter_circle.radius;
    let r_c = coverage_radius(agent.altitude, fov_half_angle);
    ((r_l - r_c).max(0.0), r_l + r_c)
}

/// Whether `p` is seen by `agent` at least once per loiter cycle.
pub fn cycle_covered_region_test(p: Point2, agent: &UavState, fov_half_angle: f64) -> bool {
    if !agent.is_loitering() {
        return false;
    }
    let (inner, outer) = cycle_ring(agent, fov_half_angle);
    let d = p.distance(agent.loiter_circle.center);
    inner <= d && d <= outer
}

/// Same-level loitering agents within `r_com` of `agent`, excluding itself.
pub fn same_level_neighbors<'a>(agent: &UavState, fleet: &'a [UavState], r_com: f64) -> Vec<&'a UavState> {
    fleet
        .iter()
        .filter(|o| {
            o.id != agent.id
                && o.is_loitering()
                && o.level == agent.level
                && o.position.distance_3d(&agent.position) <= r_com
        })
        .collect()
}

/// `(1 − f)·π·r_l² − Σ lens areas`, clamped at zero. `f` is the fraction of the
/// loiter disc outside `poly`, estimated at `sampling` metres.
pub fn effective_coverage(
    agent: &UavState,
    neighbors: &[&UavState],
    poly: &Polygon,
    sampling: f64,
) -> Result<f64, CoverageError> {
    if !agent.is_loitering() {
        return Ok(0.0);
    }
    let disc = agent.loiter_circle;
    let f = circle_fraction_outside(&disc, poly, sampling)?;
    let overlap: f64 = neighbors
        .iter()
        .filter(|n| n.id != agent.id && n.level == agent.level && n.is_loitering())
        .map(|n| circle_overlap_area(&disc, &n.loiter_circle))
        .sum();
    Ok(((1.0 - f) * PI * disc.radius * disc.radius - overlap).max(0.0))
}

/// Disc sampling step used for `f` in effective coverage.
pub fn default_disc_sampling(radius: f64) -> f64 {
    radius / 40.0
}

/// Effective coverage of every loitering agent in `fleet`.
pub fn effective_coverages(
    fleet: &[UavState],
    poly: &Polygon,
    config: &FleetConfig,
) -> Result<BTreeMap<UavId, f64>, CoverageError> {
    let r_com = config.r_com();
    fleet
        .iter()
        .filter(|a| a.is_loitering())
        .map(|a| {
            let neighbors = same_level_neighbors(a, fleet, r_com);
            let e = effective_coverage(a, &neighbors, poly, default_disc_sampling(a.loiter_circle.radius))?;
            Ok((a.id, e))
        })
        .collect()
}

/// Cell-centred sample lattice clipped to the polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub resolution: f64,
    origin: Point2,
    nx: usize,
    ny: usize,
    /// Lattice cell → sample index, for cells whose centre lies inside.
    cell_sample: Vec<Option<u32>>,
    pub samples: Vec<Point2>,
}

impl CoverageGrid {
    pub fn new(poly: &Polygon, resolution: f64, r_l_min: f64) -> Result<Self, CoverageError> {
        let max = r_l_min / 10.0;
        if !(resolution > 0.0 && resolution <= max) {
            return Err(CoverageError::Resolution { resolution, max });
        }
        let (min, hi) = poly.bounding_box();
        let nx = ((hi.x - min.x) / resolution).ceil().max(1.0) as usize;
        let ny = ((hi.y - min.y) / resolution).ceil().max(1.0) as usize;
        let mut cell_sample = vec![None; nx * ny];
        let mut samples = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let p = Point2::new(
                    min.x + (i as f64 + 0.5) * resolution,
                    min.y + (j as f64 + 0.5) * resolution,
                );
                if poly.contains(p) {
                    cell_sample[j * nx + i] = Some(samples.len() as u32);
                    samples.push(p);
                }
            }
        }
        Ok(Self {
            resolution,
            origin: min,
            nx,
            ny,
            cell_sample,
            samples,
        })
    }

    /// Sample indices within the axis-aligned box around `center`.
    fn samples_near(&self, center: Point2, reach: f64) -> impl Iterator<Item = usize> + '_ {
        let span = |c: f64, o: f64, n: usize| {
            let lo = ((c - reach - o) / self.resolution - 0.5).floor().max(0.0) as usize;
            let hi = (((c + reach - o) / self.resolution - 0.5).ceil().max(-1.0) + 1.0) as usize;
            lo.min(n)..hi.min(n)
        };
        let xs = span(center.x, self.origin.x, self.nx);
        let ys = span(center.y, self.origin.y, self.ny);
        ys.flat_map(move |j| xs.clone().map(move |i| j * self.nx + i))
            .filter_map(move |cell| self.cell_sample[cell].map(|s| s as usize))
    }

    /// Number of agents covering each sample per cycle, plus the best quality.
    pub fn covering(&self, fleet: &[UavState], config: &FleetConfig) -> Result<(Vec<u32>, Vec<f64>), CoverageError> {
        let mut count = vec![0u32; self.samples.len()];
        let mut best_q = vec![0.0f64; self.samples.len()];
        for agent in fleet.iter().filter(|a| a.is_loitering()) {
            let q = quality(agent.level, config)?;
            let (inner, outer) = cycle_ring(agent, config.fov_half_angle);
            let c = agent.loiter_circle.center;
            for s in self.samples_near(c, outer) {
                let d = self.samples[s].distance(c);
                if inner <= d && d <= outer {
                    count[s] += 1;
                    best_q[s] = best_q[s].max(q);
                }
            }
        }
        Ok((count, best_q))
    }

    pub fn evaluate(&self, fleet: &[UavState], poly: &Polygon, config: &FleetConfig) -> Result<CoverageReport, CoverageError> {
        let (count, best_q) = self.covering(fleet, config)?;
        let total = self.samples.len();
        let covered = count.iter().filter(|&&c| c > 0).count();
        let uncovered_count = total - covered;
        let uncovered_samples: Vec<Point2> = count
            .iter()
            .zip(&self.samples)
            .filter(|(c, _)| **c == 0)
            .map(|(_, p)| *p)
            .take(MAX_LISTED_UNCOVERED)
            .collect();

        // coverage-weighted quality of the agents themselves
        let mut weighted = 0.0;
        let mut weight = 0.0;
        for agent in fleet.iter().filter(|a| a.is_loitering()) {
            let q = quality(agent.level, config)?;
            let (inner, outer) = cycle_ring(agent, config.fov_half_angle);
            let c = agent.loiter_circle.center;
            let w = self
                .samples_near(c, outer)
                .filter(|&s| {
                    let d = self.samples[s].distance(c);
                    inner <= d && d <= outer
                })
                .count() as f64;
            weighted += q * w;
            weight += w;
        }
        let best_quality_mean = if covered > 0 {
            best_q.iter().filter(|&&q| q > 0.0).sum::<f64>() / covered as f64
        } else {
            0.0
        };

        let r_com = config.r_com();
        let mut total_overlap = 0.0;
        let loitering: Vec<&UavState> = fleet.iter().filter(|a| a.is_loitering()).collect();
        for (i, a) in loitering.iter().enumerate() {
            for b in &loitering[i + 1..] {
                if a.level == b.level && a.position.distance_3d(&b.position) <= r_com {
                    total_overlap += circle_overlap_area(&a.loiter_circle, &b.loiter_circle);
                }
            }
        }

        let instantaneous = self.instantaneous_fraction(fleet, config);
        Ok(CoverageReport {
            schema_version: REPORT_SCHEMA_VERSION,
            resolution: self.resolution,
            sample_count: total,
            covered_count: covered,
            fraction_covered: if total == 0 { 1.0 } else { covered as f64 / total as f64 },
            covered_area: covered as f64 * self.resolution * self.resolution,
            uncovered_count,
            uncovered_samples,
            per_agent_effective: effective_coverages(fleet, poly, config)?,
            total_overlap,
            mean_quality: if weight > 0.0 { weighted / weight } else { 0.0 },
            best_quality_mean,
            instantaneous_fraction: instantaneous,
        })
    }

    /// Fraction of samples inside some live agent's current footprint disc.
    pub fn instantaneous_fraction(&self, fleet: &[UavState], config: &FleetConfig) -> f64 {
        if self.samples.is_empty() {
            return 1.0;
        }
        let mut seen = vec![false; self.samples.len()];
        for agent in fleet.iter().filter(|a| a.is_live()) {
            let c = agent.position.position();
            let r_c = coverage_radius(agent.position.h, config.fov_half_angle);
            for s in self.samples_near(c, r_c) {
                if self.samples[s].distance(c) <= r_c {
                    seen[s] = true;
                }
            }
        }
        seen.iter().filter(|&&s| s).count() as f64 / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub schema_version: u32,
    pub resolution: f64,
    pub sample_count: usize,
    pub covered_count: usize,
    pub fraction_covered: f64,
    /// Union of per-cycle regions inside the area, from the sample count.
    pub covered_area: f64,
    pub uncovered_count: usize,
    /// First uncovered samples in row-major order.
    pub uncovered_samples: Vec<Point2>,
    pub per_agent_effective: BTreeMap<UavId, f64>,
    /// Each same-level neighbour lens counted once.
    pub total_overlap: f64,
    /// Agent quality weighted by the number of samples each agent covers.
    pub mean_quality: f64,
    /// Mean over covered samples of the best quality covering them.
    pub best_quality_mean: f64,
    /// Diagnostic only: union of instantaneous footprints.
    pub instantaneous_fraction: f64,
}

impl CoverageReport {
    pub fn fully_covered(&self) -> bool {
        self.uncovered_count == 0
    }
}

/// Builds a grid at `resolution` and evaluates `fleet` on it.
pub fn verify_full_coverage(
    fleet: &[UavState],
    poly: &Polygon,
    resolution: f64,
    config: &FleetConfig,
) -> Result<CoverageReport, CoverageError> {
    CoverageGrid::new(poly, resolution, config.r_l_min)?.evaluate(fleet, poly, config)
}
