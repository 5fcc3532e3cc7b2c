//! `loiter`: pack areas, run recovery scenarios, check coverage and plan
//! level transitions from the command line.
//!
//! Exit codes: 0 on success, 1 when a checked predicate is false, 2 on usage
//! or validation errors.

mod svg;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use loiter_core::coverage::verify_full_coverage;
use loiter_core::dubins::{plan_level_transition, sample_path, DubinsPath3D, MotionPrimitive, Planner, TransitionPlan};
use loiter_core::engine::{run_with_packing, RunOutput, Scenario, TraceRecord};
use loiter_core::fleet::{initial_deploy, LevelClock, UavId, UavState};
use loiter_core::geometry::{Circle, Polygon, Pose3};
use loiter_core::packing::{build_packing, Classification, FleetConfig, Packing, SquareId};
use loiter_core::protocol::{DecisionKind, SelectionPolicy};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "loiter", version, about = "Persistent coverage by loitering fleets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the square packing for an area.
    Pack(PackArgs),
    /// Run a scenario and write its trace, metrics and report.
    Simulate(SimulateArgs),
    /// Check per-cycle full coverage of a fleet; exit 1 if not covered.
    VerifyCoverage(VerifyArgs),
    /// Plan one transition path.
    PlanDubins(PlanArgs),
    /// Draw an area with its packing and a fleet.
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassificationArg {
    Corner,
    Robust,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    EffectiveCoverage,
    PhaseNearest,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON, or a bare polygon `{"x": [...], "y": [...]}`.
    #[arg(long)]
    scenario: PathBuf,
    /// Square classification: corner rule, or corner rule plus edge crossings.
    #[arg(long, value_enum)]
    classification: Option<ClassificationArg>,
    /// Recovery agent selection policy.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Coverage grid spacing, metres.
    #[arg(long)]
    resolution: Option<f64>,
    /// Engine step, seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Seed for every random drop event.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PackArgs {
    #[command(flatten)]
    input: ScenarioArgs,
    /// Directory for packing.json and fleet.json; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also draw the packing and initial deployment to this SVG file.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: ScenarioArgs,
    /// Directory for trace.jsonl, metrics.csv, report.json and final_fleet.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Write post-drop, post-decision and final SVG frames.
    #[arg(long)]
    frames: bool,
    /// Write an SVG of every transition path.
    #[arg(long)]
    transitions: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    input: ScenarioArgs,
    /// Fleet JSON: an array of agents or an object with a `fleet` field.
    /// The initial deployment is used when absent.
    #[arg(long)]
    fleet: Option<PathBuf>,
    /// Directory for coverage.json; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// Plan request JSON.
    #[arg(long)]
    request: PathBuf,
    /// Directory for path.json; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also draw the path to this SVG file.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    input: ScenarioArgs,
    /// Fleet JSON; the initial deployment is used when absent.
    #[arg(long)]
    fleet: Option<PathBuf>,
    /// Output SVG file.
    #[arg(long)]
    svg: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pack(a) => pack(a),
        Command::Simulate(a) => simulate(a),
        Command::VerifyCoverage(a) => verify(a),
        Command::PlanDubins(a) => plan(a),
        Command::Render(a) => render(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario> {
    let text = read(&args.scenario)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not JSON", args.scenario.display()))?;
    let mut scenario = if value.get("polygon").is_some() {
        Scenario::from_json(&text).with_context(|| format!("invalid scenario {}", args.scenario.display()))?
    } else {
        let poly: Polygon = serde_json::from_value(value).context("invalid polygon")?;
        Scenario::new(poly, FleetConfig::default())
    };
    if let Some(c) = args.classification {
        scenario.packing.classification = match c {
            ClassificationArg::Corner => Classification::Corner,
            ClassificationArg::Robust => Classification::Robust,
        };
    }
    if let Some(p) = args.policy {
        scenario.policy = match p {
            PolicyArg::EffectiveCoverage => SelectionPolicy::EffectiveCoverage,
            PolicyArg::PhaseNearest => SelectionPolicy::PhaseNearest,
        };
    }
    if let Some(r) = args.resolution {
        scenario.grid_resolution = Some(r);
    }
    if let Some(dt) = args.dt {
        scenario.dt = dt;
    }
    if let Some(seed) = args.seed {
        for e in scenario.events.iter_mut().filter(|e| e.count.is_some()) {
            e.seed = Some(seed);
        }
    }
    scenario.validate()?;
    Ok(scenario)
}

fn packing_for(scenario: &Scenario) -> Result<Packing> {
    Ok(build_packing(&scenario.polygon, &scenario.config, scenario.packing)?)
}

fn load_fleet(path: &Path) -> Result<Vec<UavState>> {
    let value: serde_json::Value = serde_json::from_str(&read(path)?).context("fleet file is not JSON")?;
    let fleet = match value.get("fleet") {
        Some(inner) => inner.clone(),
        None => value,
    };
    serde_json::from_value(fleet).context("invalid fleet")
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn pack(args: PackArgs) -> Result<bool> {
    let scenario = load_scenario(&args.input)?;
    let packing = packing_for(&scenario)?;
    let fleet = initial_deploy(&packing, 0.0)?;
    match &args.out {
        Some(dir) => {
            write(&dir.join("packing.json"), &to_json(&packing))?;
            write(&dir.join("fleet.json"), &to_json(&fleet))?;
        }
        None => print!("{}", to_json(&packing)),
    }
    if let Some(path) = &args.svg {
        write(path, &svg::render_deployment(&scenario.polygon, &packing, &fleet))?;
    }
    eprintln!(
        "{} base squares, bounding side {} m",
        packing.base_squares.len(),
        packing.bounding.side
    );
    Ok(true)
}

fn simulate(args: SimulateArgs) -> Result<bool> {
    let scenario = load_scenario(&args.input)?;
    let packing = packing_for(&scenario)?;
    let out = run_with_packing(&scenario, packing)?;
    let dir = &args.out;
    write(&dir.join("trace.jsonl"), &out.trace_jsonl())?;
    write(&dir.join("metrics.csv"), &out.metrics_csv())?;
    write(&dir.join("report.json"), &format!("{}\n", out.report_json()))?;
    write(&dir.join("final_fleet.json"), &to_json(&out.fleet))?;
    if args.frames {
        write_frames(&scenario, &out, dir)?;
    }
    if args.transitions {
        let doc = svg::render_transitions(&scenario.polygon, &out.packing, &out.transitions);
        write(&dir.join("transitions.svg"), &doc)?;
    }
    let r = &out.report;
    eprintln!(
        "initial {}, lost {}, promotions {}, lendings {}, unrecoverable {}, final coverage {}",
        r.initial_agents, r.lost, r.promotions, r.lendings, r.unrecoverable, r.final_coverage.fraction_covered
    );
    Ok(true)
}

fn write_frames(scenario: &Scenario, out: &RunOutput, dir: &Path) -> Result<()> {
    let initial = initial_deploy(&out.packing, 0.0)?;
    let dropped: BTreeSet<UavId> = out
        .trace
        .iter()
        .filter_map(|l| match &l.record {
            TraceRecord::Event { dropped } => Some(dropped.iter().copied()),
            _ => None,
        })
        .flatten()
        .collect();
    let failed: BTreeSet<SquareId> = initial
        .iter()
        .filter(|a| dropped.contains(&a.id))
        .map(|a| a.assigned_square)
        .collect();
    let recovery: BTreeSet<SquareId> = out
        .decisions()
        .filter(|d| d.kind != DecisionKind::Unrecoverable)
        .map(|d| d.target_square)
        .collect();
    let poly = &scenario.polygon;
    let none = BTreeSet::new();
    let frames = [
        ("frame_post_drop.svg", svg::render_frame(poly, &out.packing, &failed, &none, None, "after drop")),
        (
            "frame_post_decision.svg",
            svg::render_frame(poly, &out.packing, &failed, &recovery, None, "recovery squares"),
        ),
        (
            "frame_final.svg",
            svg::render_frame(poly, &out.packing, &failed, &recovery, Some(&out.fleet), "final"),
        ),
    ];
    for (name, doc) in frames {
        write(&dir.join(name), &doc)?;
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let scenario = load_scenario(&args.input)?;
    let fleet = match &args.fleet {
        Some(path) => load_fleet(path)?,
        None => initial_deploy(&packing_for(&scenario)?, 0.0)?,
    };
    let report = verify_full_coverage(&fleet, &scenario.polygon, scenario.grid_resolution(), &scenario.config)?;
    match &args.out {
        Some(dir) => write(&dir.join("coverage.json"), &to_json(&report))?,
        None => print!("{}", to_json(&report)),
    }
    eprintln!(
        "fraction covered {} ({} of {} samples uncovered)",
        report.fraction_covered, report.uncovered_count, report.sample_count
    );
    Ok(report.fully_covered())
}

/// A loiter slot: circle, altitude level and, for the starting agent, phase.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Slot {
    circle: Circle,
    level: u8,
    #[serde(default)]
    phase: f64,
}

/// Either a pose-to-pose request (`start`, `goal`) or a synchronized level
/// transition (`current`, `target`, `now`).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanRequest {
    #[serde(default)]
    config: FleetConfig,
    /// Overrides the configured transition turn radius.
    #[serde(default)]
    turn_radius: Option<f64>,
    #[serde(default)]
    start: Option<Pose3>,
    #[serde(default)]
    goal: Option<Pose3>,
    #[serde(default)]
    current: Option<Slot>,
    #[serde(default)]
    target: Option<Slot>,
    #[serde(default)]
    now: f64,
    /// Polyline sampling step, seconds.
    #[serde(default = "default_sample_dt")]
    sample_dt: f64,
}

fn default_sample_dt() -> f64 {
    0.5
}

#[derive(Serialize)]
struct TransitionInfo {
    break_off_time: f64,
    join_in_time: f64,
    target_level: u8,
    phase_error: f64,
}

#[derive(Serialize)]
struct PlanOutput {
    schema_version: u32,
    word: String,
    planar_word: Option<String>,
    length: f64,
    duration: f64,
    segments: Vec<MotionPrimitive>,
    polyline: Vec<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transition: Option<TransitionInfo>,
}

fn checked_circle(c: &Circle) -> Result<Circle> {
    Ok(Circle::new(c.center, c.radius)?)
}

fn plan(args: PlanArgs) -> Result<bool> {
    let req: PlanRequest = serde_json::from_str(&read(&args.request)?).context("invalid plan request")?;
    let mut config = req.config.clone();
    if let Some(r) = req.turn_radius {
        config.transition_turn_radius = Some(r);
    }
    config.validate()?;
    let (path, circles, transition): (DubinsPath3D, Vec<(Circle, u8)>, Option<TransitionPlan>) =
        match (&req.start, &req.goal, &req.current, &req.target) {
            (Some(s), Some(g), None, None) => {
                if s.h < 0.0 || g.h < 0.0 {
                    bail!("altitudes must be non-negative");
                }
                let start = Pose3::new(s.x, s.y, s.h, s.heading);
                let goal = Pose3::new(g.x, g.y, g.h, g.heading);
                (Planner::from_config(&config)?.plan_3d(&start, &goal)?, Vec::new(), None)
            }
            (None, None, Some(cur), Some(tgt)) => {
                let from = checked_circle(&cur.circle)?;
                let to = checked_circle(&tgt.circle)?;
                let agent = UavState::loitering(UavId(0), SquareId(0), cur.level, from, cur.phase, &config)?;
                let clock = LevelClock::new(tgt.level, &config)?;
                let t = plan_level_transition(&agent, to, tgt.level, &|t| clock.phase_at(t), req.now, &config)?;
                (t.path.clone(), vec![(from, cur.level), (to, tgt.level)], Some(t))
            }
            _ => bail!("plan request needs either start and goal, or current and target"),
        };
    let polyline = sample_path(&path, req.sample_dt)?
        .iter()
        .map(|p| [p.x, p.y, p.h])
        .collect();
    let output = PlanOutput {
        schema_version: 1,
        word: path.word_string(),
        planar_word: path.planar_word.map(|w| w.to_string()),
        length: path.length,
        duration: path.duration(),
        segments: path.word.clone(),
        polyline,
        transition: transition.as_ref().map(|t| TransitionInfo {
            break_off_time: t.break_off_time,
            join_in_time: t.join_in_time,
            target_level: t.target_level,
            phase_error: t.phase_error,
        }),
    };
    match &args.out {
        Some(dir) => write(&dir.join("path.json"), &to_json(&output))?,
        None => print!("{}", to_json(&output)),
    }
    if let Some(svg_path) = &args.svg {
        write(svg_path, &svg::render_path(&path, &circles))?;
    }
    eprintln!(
        "word {} (planar {}), length {:.3} m",
        path.word_string(),
        output.planar_word.as_deref().unwrap_or("none"),
        path.length
    );
    Ok(true)
}

fn render(args: RenderArgs) -> Result<bool> {
    let scenario = load_scenario(&args.input)?;
    let packing = packing_for(&scenario)?;
    let fleet = match &args.fleet {
        Some(path) => load_fleet(path)?,
        None => initial_deploy(&packing, 0.0)?,
    };
    write(&args.svg, &svg::render_deployment(&scenario.polygon, &packing, &fleet))?;
    Ok(true)
}
