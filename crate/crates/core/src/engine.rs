//! Discrete-time simulation: deployment, drop injection, protocol rounds,
//! transitions and coverage bookkeeping.
//!
//! Each step at `t = k·dt` runs, in order: kinematics and arrivals, due drop
//! events, one protocol round (heartbeats, detection, resolution, messages),
//! coverage if the set of covering agents changed, the metrics row and, at
//! its cadence, a snapshot.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{CoverageError, CoverageGrid, CoverageReport};
use crate::dubins::TransitionPlan;
use crate::fleet::{advance_transition, initial_deploy, level_clocks, loiter_at, FleetError, Mode, TransitionProgress, UavId, UavState};
use crate::geometry::Polygon;
use crate::packing::{build_packing, ConfigError, FleetConfig, Packing, PackingError, PackingOptions, SquareId};
use crate::protocol::{
    apply_decision, build_tables, decision_messages, detect_failures, drop_agents, mark_promoted, resolve_failures,
    DecisionKind, MessageKind, ProtocolContext, ProtocolError, ProtocolMessage, RecoveryDecision, SelectionPolicy,
    Tables,
};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Packing(#[from] PackingError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Drop,
}

/// A drop of explicit agents, or of `count` agents drawn with `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub time: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uav_ids: Option<Vec<UavId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_dt() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub polygon: Polygon,
    #[serde(default)]
    pub config: FleetConfig,
    #[serde(default)]
    pub packing: PackingOptions,
    #[serde(default)]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    /// Coverage grid spacing; `r_l_min / 20` when absent.
    #[serde(default)]
    pub grid_resolution: Option<f64>,
    #[serde(default)]
    pub policy: SelectionPolicy,
    /// Seconds between snapshots; only the first and last when absent.
    #[serde(default)]
    pub snapshot_interval: Option<f64>,
    #[serde(default)]
    pub snapshot_tables: bool,
}

impl Scenario {
    pub fn new(polygon: Polygon, config: FleetConfig) -> Self {
        Self {
            polygon,
            config,
            packing: PackingOptions::default(),
            duration: 0.0,
            dt: default_dt(),
            events: Vec::new(),
            grid_resolution: None,
            policy: SelectionPolicy::default(),
            snapshot_interval: None,
            snapshot_tables: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        serde_json::from_str(text).map_err(|e| EngineError::Scenario(e.to_string()))
    }

    pub fn grid_resolution(&self) -> f64 {
        self.grid_resolution.unwrap_or(self.config.r_l_min / 20.0)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.config.validate()?;
        let bad = |m: String| Err(EngineError::Scenario(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be non-negative, got {}", self.duration));
        }
        if let Some(s) = self.snapshot_interval {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("snapshot_interval must be positive, got {s}"));
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            if !(0.0..=self.duration).contains(&e.time) {
                return bad(format!("event {i} at {} s lies outside [0, {}]", e.time, self.duration));
            }
            match (&e.uav_ids, e.count, e.seed) {
                (Some(_), None, None) => {}
                (None, Some(_), Some(_)) => {}
                (None, Some(_), None) => return bad(format!("event {i}: random drops need an explicit seed")),
                _ => return bad(format!("event {i}: give either uav_ids or count and seed")),
            }
        }
        Ok(())
    }
}

/// Agents picked by a seeded draw over the live ids in ascending order.
pub fn random_drop_selection(live: &[UavId], count: usize, seed: u64) -> Vec<UavId> {
    let mut sorted = live.to_vec();
    sorted.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<UavId> = sorted.choose_multiple(&mut rng, count).copied().collect();
    picked.sort();
    picked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSummary {
    pub uav: UavId,
    pub target_square: SquareId,
    pub target_level: u8,
    pub break_off_time: f64,
    pub join_in_time: f64,
    pub word: String,
    pub length: f64,
    pub phase_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub fleet: Vec<UavState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tables: Option<Tables>,
    pub transitioning: Vec<UavId>,
    pub fraction_covered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Deployment {
        agents: usize,
        bounding_side: f64,
        fraction_covered: f64,
    },
    Event {
        dropped: Vec<UavId>,
    },
    Heartbeats {
        count: usize,
    },
    Detection {
        dropped: UavId,
        observers: Vec<UavId>,
    },
    Message(ProtocolMessage),
    Decision(RecoveryDecision),
    Transition(TransitionSummary),
    Arrival {
        uav: UavId,
        level: u8,
        square: SquareId,
    },
    Coverage {
        fraction_covered: f64,
        uncovered_count: usize,
        mean_quality: f64,
    },
    Diagnostic {
        message: String,
    },
    Snapshot(Box<Snapshot>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub schema_version: u32,
    pub time: f64,
    #[serde(flatten)]
    pub record: TraceRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub time: f64,
    pub fraction_covered: f64,
    pub live_count: usize,
    pub mean_quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub schema_version: u32,
    pub duration: f64,
    pub steps: u64,
    pub initial_agents: usize,
    pub lost: usize,
    pub promotions: usize,
    /// Lending pairs; each moves two agents.
    pub lendings: usize,
    pub unrecoverable: usize,
    pub arrivals: usize,
    pub pending_transitions: usize,
    pub messages: usize,
    pub undeliverable_messages: usize,
    pub isolated_failures: usize,
    pub min_fraction_covered: f64,
    /// Last time coverage went from below 1 back to 1.
    pub coverage_restored_at: Option<f64>,
    pub max_transition_duration: f64,
    pub final_coverage: CoverageReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub packing: Packing,
    pub trace: Vec<TraceLine>,
    pub metrics: Vec<MetricsRow>,
    pub report: FinalReport,
    pub fleet: Vec<UavState>,
    /// Every transition started during the run, in start order.
    pub transitions: Vec<TransitionPlan>,
}

impl RunOutput {
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.trace {
            out.push_str(&serde_json::to_string(line).expect("trace serializes"));
            out.push('\n');
        }
        out
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("time,fraction_covered,live_count,mean_quality\n");
        for r in &self.metrics {
            let _ = writeln!(out, "{},{},{},{}", r.time, r.fraction_covered, r.live_count, r.mean_quality);
        }
        out
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes")
    }

    pub fn decisions(&self) -> impl Iterator<Item = &RecoveryDecision> + '_ {
        self.trace.iter().filter_map(|l| match &l.record {
            TraceRecord::Decision(d) => Some(d),
            _ => None,
        })
    }
}

struct Recorder {
    trace: Vec<TraceLine>,
}

impl Recorder {
    fn push(&mut self, time: f64, record: TraceRecord) {
        self.trace.push(TraceLine {
            schema_version: TRACE_SCHEMA_VERSION,
            time,
            record,
        });
    }
}

/// Builds the packing and runs `scenario` to completion.
pub fn run(scenario: &Scenario) -> Result<RunOutput, EngineError> {
    scenario.validate()?;
    let packing = build_packing(&scenario.polygon, &scenario.config, scenario.packing)?;
    run_with_packing(scenario, packing)
}

pub fn run_with_packing(scenario: &Scenario, packing: Packing) -> Result<RunOutput, EngineError> {
    scenario.validate()?;
    let config = &packing.config;
    let poly = &scenario.polygon;
    let clocks = level_clocks(config)?;
    let grid = CoverageGrid::new(poly, scenario.grid_resolution(), config.r_l_min)?;
    let r_com = config.r_com();

    let mut fleet = initial_deploy(&packing, 0.0)?;
    for e in &scenario.events {
        if let Some(ids) = &e.uav_ids {
            if let Some(bad) = ids.iter().find(|id| id.0 as usize >= fleet.len()) {
                return Err(EngineError::Scenario(format!("unknown agent {bad} in drop event")));
            }
        }
    }
    let mut tables = build_tables(&fleet, config)?;
    let mut rec = Recorder { trace: Vec::new() };
    let mut report = grid.evaluate(&fleet, poly, config)?;
    let initial_agents = fleet.len();
    rec.push(
        0.0,
        TraceRecord::Deployment {
            agents: initial_agents,
            bounding_side: packing.bounding.side,
            fraction_covered: report.fraction_covered,
        },
    );
    let snapshot = |fleet: &[UavState], tables: &Tables, fraction: f64| {
        TraceRecord::Snapshot(Box::new(Snapshot {
            fleet: fleet.to_vec(),
            tables: scenario.snapshot_tables.then(|| tables.clone()),
            transitioning: fleet.iter().filter(|a| a.mode == Mode::Transitioning).map(|a| a.id).collect(),
            fraction_covered: fraction,
        }))
    };
    rec.push(0.0, snapshot(&fleet, &tables, report.fraction_covered));
    let live_count = |fleet: &[UavState]| fleet.iter().filter(|a| a.is_live()).count();
    let mut metrics = vec![MetricsRow {
        time: 0.0,
        fraction_covered: report.fraction_covered,
        live_count: live_count(&fleet),
        mean_quality: report.mean_quality,
    }];

    let mut events: Vec<(usize, &ScenarioEvent)> = scenario.events.iter().enumerate().collect();
    events.sort_by(|a, b| a.1.time.total_cmp(&b.1.time).then(a.0.cmp(&b.0)));
    let mut next_event = 0;

    let mut lost = 0;
    let (mut promotions, mut lendings, mut unrecoverable, mut arrivals) = (0, 0, 0, 0);
    let (mut messages, mut undeliverable, mut isolated) = (0, 0, 0);
    let mut min_fraction = report.fraction_covered;
    let mut restored_at = None;
    let mut max_transition: f64 = 0.0;
    let mut transitions: Vec<TransitionPlan> = Vec::new();

    let steps = (scenario.duration / scenario.dt + 1e-9).floor() as u64;
    let mut last_snapshot_slot = 0u64;
    for k in 0..=steps {
        let t = k as f64 * scenario.dt;
        let mut dirty = false;

        // kinematics
        if k > 0 {
            for agent in fleet.iter_mut() {
                match agent.mode {
                    Mode::Loitering => loiter_at(agent, &clocks[agent.level as usize - 1], t),
                    Mode::Transitioning => {
                        if advance_transition(agent, &clocks, config, t)? == TransitionProgress::Arrived {
                            arrivals += 1;
                            dirty = true;
                            mark_promoted(&mut tables, agent.id)?;
                            rec.push(
                                t,
                                TraceRecord::Arrival {
                                    uav: agent.id,
                                    level: agent.level,
                                    square: agent.assigned_square,
                                },
                            );
                        }
                    }
                    Mode::Dropped => {}
                }
            }
        }

        // events due by now
        let mut dropped_now = BTreeSet::new();
        while next_event < events.len() && events[next_event].1.time <= t + 1e-9 {
            let e = events[next_event].1;
            next_event += 1;
            let live: Vec<UavId> = fleet.iter().filter(|a| a.is_live()).map(|a| a.id).collect();
            let ids: Vec<UavId> = match (&e.uav_ids, e.count, e.seed) {
                (Some(ids), _, _) => ids.iter().copied().filter(|id| live.contains(id)).collect(),
                (None, Some(count), Some(seed)) => random_drop_selection(&live, count.min(live.len()), seed),
                _ => unreachable!("validated"),
            };
            let ids: BTreeSet<UavId> = ids.into_iter().filter(|id| !dropped_now.contains(id)).collect();
            drop_agents(&mut fleet, &ids)?;
            lost += ids.len();
            dirty |= !ids.is_empty();
            rec.push(
                t,
                TraceRecord::Event {
                    dropped: ids.iter().copied().collect(),
                },
            );
            dropped_now.extend(ids);
        }

        // protocol round
        let heartbeats: BTreeSet<UavId> = fleet.iter().filter(|a| a.is_live()).map(|a| a.id).collect();
        rec.push(t, TraceRecord::Heartbeats { count: heartbeats.len() });
        let detected = detect_failures(&mut tables, &heartbeats)?;
        let mut drops: BTreeSet<UavId> = BTreeSet::new();
        for d in &detected {
            rec.push(
                t,
                TraceRecord::Detection {
                    dropped: d.dropped,
                    observers: d.observers.clone(),
                },
            );
            drops.insert(d.dropped);
        }
        for id in &dropped_now {
            if !drops.contains(id) {
                isolated += 1;
                rec.push(
                    t,
                    TraceRecord::Diagnostic {
                        message: format!("agent {id} dropped with no neighbour to observe it"),
                    },
                );
                drops.insert(*id);
            }
        }
        tables.retain(|id, _| heartbeats.contains(id));
        if !drops.is_empty() {
            let ctx = ProtocolContext {
                packing: &packing,
                polygon: poly,
                policy: scenario.policy,
                now: t,
            };
            let decisions = resolve_failures(&fleet, &drops, &ctx)?;
            let msgs = decision_messages(&decisions, &fleet, &tables, &packing, t);
            for d in &decisions {
                rec.push(t, TraceRecord::Decision(d.clone()));
                match d.kind {
                    DecisionKind::Promotion => promotions += 1,
                    DecisionKind::LendPrimary => lendings += 1,
                    DecisionKind::LendDeficit => {}
                    DecisionKind::Unrecoverable => unrecoverable += 1,
                }
            }
            for m in msgs {
                messages += 1;
                let from = fleet[m.from.0 as usize].position;
                let to = fleet[m.to.0 as usize].position;
                if from.distance_3d(&to) > r_com {
                    undeliverable += 1;
                }
                debug_assert_ne!(m.kind, MessageKind::Heartbeat);
                rec.push(t, TraceRecord::Message(m));
            }
            for d in decisions.iter().filter(|d| d.kind != DecisionKind::Unrecoverable) {
                match apply_decision(d, &mut fleet, &packing, t) {
                    Ok(plan) => {
                        dirty = true;
                        max_transition = max_transition.max(plan.join_in_time - t);
                        rec.push(
                            t,
                            TraceRecord::Transition(TransitionSummary {
                                uav: plan.uav,
                                target_square: d.target_square,
                                target_level: plan.target_level,
                                break_off_time: plan.break_off_time,
                                join_in_time: plan.join_in_time,
                                word: plan.path.word_string(),
                                length: plan.path.length,
                                phase_error: plan.phase_error,
                            }),
                        );
                        transitions.push(plan);
                    }
                    Err(ProtocolError::Dubins(e)) => {
                        unrecoverable += 1;
                        rec.push(
                            t,
                            TraceRecord::Diagnostic {
                                message: format!("transition planning failed: {e}"),
                            },
                        );
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }

        if dirty {
            let before = report.fraction_covered;
            report = grid.evaluate(&fleet, poly, config)?;
            rec.push(
                t,
                TraceRecord::Coverage {
                    fraction_covered: report.fraction_covered,
                    uncovered_count: report.uncovered_count,
                    mean_quality: report.mean_quality,
                },
            );
            min_fraction = min_fraction.min(report.fraction_covered);
            if before < 1.0 && report.fraction_covered == 1.0 {
                restored_at = Some(t);
            }
        }
        if k > 0 {
            metrics.push(MetricsRow {
                time: t,
                fraction_covered: report.fraction_covered,
                live_count: live_count(&fleet),
                mean_quality: report.mean_quality,
            });
        }
        if let Some(interval) = scenario.snapshot_interval {
            let slot = (t / interval + 1e-9).floor() as u64;
            if k > 0 && slot > last_snapshot_slot {
                last_snapshot_slot = slot;
                rec.push(t, snapshot(&fleet, &tables, report.fraction_covered));
            }
        }
    }
    let end = steps as f64 * scenario.dt;
    if steps > 0 && rec.trace.last().is_none_or(|l| !matches!(l.record, TraceRecord::Snapshot(_)) || l.time != end) {
        rec.push(end, snapshot(&fleet, &tables, report.fraction_covered));
    }

    let final_report = FinalReport {
        schema_version: TRACE_SCHEMA_VERSION,
        duration: scenario.duration,
        steps,
        initial_agents,
        lost,
        promotions,
        lendings,
        unrecoverable,
        arrivals,
        pending_transitions: fleet.iter().filter(|a| a.mode == Mode::Transitioning).count(),
        messages,
        undeliverable_messages: undeliverable,
        isolated_failures: isolated,
        min_fraction_covered: min_fraction,
        coverage_restored_at: restored_at,
        max_transition_duration: max_transition,
        final_coverage: report,
    };
    Ok(RunOutput {
        packing,
        trace: rec.trace,
        metrics,
        report: final_report,
        fleet,
        transitions,
    })
}
