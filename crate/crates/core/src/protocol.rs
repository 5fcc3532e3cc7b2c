//! Drop-out detection and recovery.
//!
//! Each agent keeps a table of the agents within communication range, labelled
//! active (1), promoted (2) or dropped (0). Missing heartbeats flip labels to
//! 0. Each square whose agent is lost is then resolved, in order of
//! (level, id):
//!
//! 1. nothing to do if the square or an ancestor already has an agent;
//! 2. a square above the base level is refilled from its own children;
//! 3. otherwise one surviving sibling is promoted to the parent square;
//! 4. otherwise an adjacent parent-level square with two spare agents lends
//!    one to the failed parent and moves the other up over itself;
//! 5. otherwise the loss is unrecoverable.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{default_disc_sampling, effective_coverage, same_level_neighbors, CoverageError};
use crate::dubins::{plan_level_transition, DubinsError, Planner, TransitionPlan};
use crate::fleet::{altitude_for_level, loiter_pose, LevelClock, Mode, UavId, UavState};
use crate::geometry::Polygon;
use crate::packing::{ConfigError, FleetConfig, Packing, SquareId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Dubins(#[from] DubinsError),
    #[error("label of {neighbor} in the table of {owner} cannot go from {from:?} to {to:?}")]
    LabelTransition {
        owner: UavId,
        neighbor: UavId,
        from: Label,
        to: Label,
    },
    #[error("agent {0} is not in the fleet")]
    UnknownAgent(UavId),
    #[error("agent {0} is already dropped")]
    AlreadyDropped(UavId),
    #[error("an unrecoverable decision cannot be applied")]
    Unrecoverable,
}

/// Neighbour state as seen by a table owner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Dropped = 0,
    Active = 1,
    Promoted = 2,
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Label::Dropped),
            1 => Ok(Label::Active),
            2 => Ok(Label::Promoted),
            other => Err(format!("unknown label {other}")),
        }
    }
}

impl Label {
    pub fn can_become(self, next: Label) -> bool {
        matches!(
            (self, next),
            (Label::Active, Label::Dropped) | (Label::Active, Label::Promoted) | (Label::Promoted, Label::Dropped)
        ) || self == next
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborTable {
    pub owner: UavId,
    pub entries: BTreeMap<UavId, Label>,
}

impl NeighborTable {
    pub fn set(&mut self, neighbor: UavId, label: Label) -> Result<bool, ProtocolError> {
        let Some(current) = self.entries.get_mut(&neighbor) else {
            return Ok(false);
        };
        if !current.can_become(label) {
            return Err(ProtocolError::LabelTransition {
                owner: self.owner,
                neighbor,
                from: *current,
                to: label,
            });
        }
        let changed = *current != label;
        *current = label;
        Ok(changed)
    }

    /// Labels in neighbour-id order.
    pub fn state_vector(&self) -> Vec<u8> {
        self.entries.values().map(|&l| l.into()).collect()
    }
}

pub type Tables = BTreeMap<UavId, NeighborTable>;

/// Every other agent within `r_com` (3D, inclusive) of `agent`.
pub fn build_neighborhood(agent: &UavState, all: &[UavState], config: &FleetConfig) -> Result<NeighborTable, ProtocolError> {
    config.validate()?;
    let r_com = config.r_com();
    let entries = all
        .iter()
        .filter(|o| o.id != agent.id && o.position.distance_3d(&agent.position) <= r_com)
        .map(|o| (o.id, if o.is_live() { Label::Active } else { Label::Dropped }))
        .collect();
    Ok(NeighborTable {
        owner: agent.id,
        entries,
    })
}

/// Tables for every live agent.
pub fn build_tables(fleet: &[UavState], config: &FleetConfig) -> Result<Tables, ProtocolError> {
    fleet
        .iter()
        .filter(|a| a.is_live())
        .map(|a| Ok((a.id, build_neighborhood(a, fleet, config)?)))
        .collect()
}

/// A drop noticed by at least one neighbour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropEvent {
    pub dropped: UavId,
    pub observers: Vec<UavId>,
}

/// Flips the label of every silent neighbour to 0 in the tables of agents
/// that are still heard from.
pub fn detect_failures(tables: &mut Tables, heartbeats: &BTreeSet<UavId>) -> Result<Vec<DropEvent>, ProtocolError> {
    let mut seen: BTreeMap<UavId, Vec<UavId>> = BTreeMap::new();
    for (owner, table) in tables.iter_mut() {
        if !heartbeats.contains(owner) {
            continue;
        }
        let silent: Vec<UavId> = table
            .entries
            .iter()
            .filter(|(id, l)| **l != Label::Dropped && !heartbeats.contains(id))
            .map(|(id, _)| *id)
            .collect();
        for id in silent {
            table.set(id, Label::Dropped)?;
            seen.entry(id).or_default().push(*owner);
        }
    }
    Ok(seen
        .into_iter()
        .map(|(dropped, observers)| DropEvent { dropped, observers })
        .collect())
}

/// Marks `uav` as promoted in every table that lists it as active.
pub fn mark_promoted(tables: &mut Tables, uav: UavId) -> Result<usize, ProtocolError> {
    let mut changed = 0;
    for table in tables.values_mut() {
        if table.entries.get(&uav) == Some(&Label::Active) && table.set(uav, Label::Promoted)? {
            changed += 1;
        }
    }
    Ok(changed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    /// Smallest effective coverage, then shortest transfer.
    #[default]
    EffectiveCoverage,
    /// Shortest transfer.
    PhaseNearest,
}

/// Everything resolution needs besides the fleet itself.
pub struct ProtocolContext<'a> {
    pub packing: &'a Packing,
    pub polygon: &'a Polygon,
    pub policy: SelectionPolicy,
    pub now: f64,
}

impl ProtocolContext<'_> {
    fn config(&self) -> &FleetConfig {
        &self.packing.config
    }
}

/// Length of the path from `agent`'s current pose to the slot on the target
/// circle that the target level's clock currently occupies.
pub fn transfer_cost(agent: &UavState, target: SquareId, target_level: u8, ctx: &ProtocolContext) -> Result<f64, ProtocolError> {
    let config = ctx.config();
    let planner = Planner::from_config(config)?;
    let circle = ctx.packing.square(target).loiter_circle();
    let clock = LevelClock::new(target_level, config)?;
    let goal = loiter_pose(&circle, altitude_for_level(target_level, config)?, clock.phase_at(ctx.now));
    Ok(planner.plan_3d(&agent.position, &goal)?.length)
}

/// Picks the agent to send from `candidates` (all live) to `target`.
pub fn select_recovery_uav(
    candidates: &[&UavState],
    fleet: &[UavState],
    target: SquareId,
    target_level: u8,
    ctx: &ProtocolContext,
) -> Result<Option<UavId>, ProtocolError> {
    match candidates {
        [] => return Ok(None),
        [only] => return Ok(Some(only.id)),
        _ => {}
    }
    let config = ctx.config();
    let mut scored = Vec::with_capacity(candidates.len());
    for agent in candidates {
        let e = match ctx.policy {
            SelectionPolicy::EffectiveCoverage => {
                let neighbors = same_level_neighbors(agent, fleet, config.r_com());
                effective_coverage(agent, &neighbors, ctx.polygon, default_disc_sampling(agent.loiter_circle.radius))?
            }
            SelectionPolicy::PhaseNearest => 0.0,
        };
        let cost = transfer_cost(agent, target, target_level, ctx)?;
        scored.push((e, cost, agent.id));
    }
    let min_e = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * min_e.abs().max(1.0);
    Ok(scored
        .into_iter()
        .filter(|s| s.0 <= min_e + tol)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)))
        .map(|s| s.2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Promotion,
    /// x₁: lent to the failed parent square.
    LendPrimary,
    /// x₂: moved up over the lending square itself.
    LendDeficit,
    Unrecoverable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDecision {
    pub kind: DecisionKind,
    /// Square whose agent was lost.
    pub failed_square: SquareId,
    /// Square the chosen agent will serve.
    pub target_square: SquareId,
    pub target_level: u8,
    pub chosen_uav: Option<UavId>,
    pub donor_square: Option<SquareId>,
}

/// Live agents not in `drops`, by id.
fn survivors<'a>(fleet: &'a [UavState], drops: &BTreeSet<UavId>) -> BTreeMap<UavId, &'a UavState> {
    fleet
        .iter()
        .filter(|a| a.is_live() && !drops.contains(&a.id))
        .map(|a| (a.id, a))
        .collect()
}

/// One decision per square left without an agent by `drops`.
pub fn resolve_failures(
    fleet: &[UavState],
    drops: &BTreeSet<UavId>,
    ctx: &ProtocolContext,
) -> Result<Vec<RecoveryDecision>, ProtocolError> {
    let packing = ctx.packing;
    let max_level = ctx.config().max_level;
    let alive = survivors(fleet, drops);
    let mut failed: Vec<SquareId> = Vec::new();
    for id in drops {
        let agent = fleet
            .iter()
            .find(|a| a.id == *id)
            .ok_or(ProtocolError::UnknownAgent(*id))?;
        failed.push(agent.assigned_square);
    }
    failed.sort_by_key(|s| (packing.square(*s).level, *s));
    failed.dedup();
    let failed_set: BTreeSet<SquareId> = failed.iter().copied().collect();

    let mut served: BTreeSet<SquareId> = alive.values().map(|a| a.assigned_square).collect();
    let mut claimed: BTreeSet<UavId> = BTreeSet::new();
    let mut used_donors: BTreeSet<SquareId> = BTreeSet::new();
    let fleet_after: Vec<UavState> = alive.values().map(|a| (*a).clone()).collect();

    // loitering agents sitting on `square` at `level`, not yet spoken for
    let free_on = |square: SquareId, level: u8, claimed: &BTreeSet<UavId>| -> Vec<&UavState> {
        alive
            .values()
            .filter(|a| {
                a.mode == Mode::Loitering && a.level == level && a.assigned_square == square && !claimed.contains(&a.id)
            })
            .copied()
            .collect()
    };
    let free_in_children = |square: SquareId, level: u8, claimed: &BTreeSet<UavId>| -> Vec<&UavState> {
        packing
            .square(square)
            .children
            .iter()
            .flat_map(|c| free_on(*c, level, claimed))
            .collect()
    };

    let mut decisions = Vec::new();
    for f in failed {
        if packing.ancestors_inclusive(f).iter().any(|s| served.contains(s)) {
            continue;
        }
        let fsq = packing.square(f);
        let mut push = |kind, target: SquareId, uav: Option<UavId>, donor, served: &mut BTreeSet<SquareId>| {
            served.insert(target);
            decisions.push(RecoveryDecision {
                kind,
                failed_square: f,
                target_square: target,
                target_level: packing.square(target).level,
                chosen_uav: uav,
                donor_square: donor,
            });
        };

        if fsq.level >= 2 {
            let refill = free_in_children(f, fsq.level - 1, &claimed);
            if let Some(id) = select_recovery_uav(&refill, &fleet_after, f, fsq.level, ctx)? {
                claimed.insert(id);
                push(DecisionKind::Promotion, f, Some(id), None, &mut served);
                continue;
            }
        }

        let Some(g) = fsq.parent.filter(|_| fsq.level < max_level) else {
            push(DecisionKind::Unrecoverable, f, None, None, &mut served);
            continue;
        };
        let siblings = free_in_children(g, fsq.level, &claimed);
        if let Some(id) = select_recovery_uav(&siblings, &fleet_after, g, fsq.level + 1, ctx)? {
            claimed.insert(id);
            push(DecisionKind::Promotion, g, Some(id), None, &mut served);
            continue;
        }

        // lending from the nearest adjacent square with two spare agents
        let gsq = packing.square(g);
        let mut donors: Vec<(f64, SquareId)> = packing
            .adjacent_squares(g)
            .into_iter()
            .filter(|d| {
                let dsq = packing.square(*d);
                dsq.inside
                    && !used_donors.contains(d)
                    && !packing.ancestors_inclusive(*d).iter().any(|s| served.contains(s))
                    && !dsq.children.iter().any(|c| failed_set.contains(c))
                    && free_in_children(*d, fsq.level, &claimed).len() >= 2
            })
            .map(|d| (packing.square(d).center.distance(gsq.center), d))
            .collect();
        donors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some(&(_, donor)) = donors.first() else {
            push(DecisionKind::Unrecoverable, f, None, None, &mut served);
            continue;
        };
        let pool = free_in_children(donor, fsq.level, &claimed);
        let x1 = pick_shortest(&pool, g, gsq.level, ctx)?;
        claimed.insert(x1);
        let rest: Vec<&UavState> = pool.into_iter().filter(|a| a.id != x1).collect();
        let x2 = select_recovery_uav(&rest, &fleet_after, donor, gsq.level, ctx)?.expect("donor has a second agent");
        claimed.insert(x2);
        used_donors.insert(donor);
        push(DecisionKind::LendPrimary, g, Some(x1), Some(donor), &mut served);
        push(DecisionKind::LendDeficit, donor, Some(x2), Some(donor), &mut served);
    }
    Ok(decisions)
}

fn pick_shortest(pool: &[&UavState], target: SquareId, level: u8, ctx: &ProtocolContext) -> Result<UavId, ProtocolError> {
    let mut best: Option<(f64, UavId)> = None;
    for a in pool {
        let c = transfer_cost(a, target, level, ctx)?;
        if best.is_none_or(|(bc, bid)| c < bc || (c == bc && a.id < bid)) {
            best = Some((c, a.id));
        }
    }
    Ok(best.expect("non-empty pool").1)
}

/// Starts the chosen agent's synchronized transition towards its target.
pub fn apply_decision(
    decision: &RecoveryDecision,
    fleet: &mut [UavState],
    packing: &Packing,
    now: f64,
) -> Result<TransitionPlan, ProtocolError> {
    let uav = match (decision.kind, decision.chosen_uav) {
        (DecisionKind::Unrecoverable, _) | (_, None) => return Err(ProtocolError::Unrecoverable),
        (_, Some(id)) => id,
    };
    let config = &packing.config;
    let agent = fleet
        .iter_mut()
        .find(|a| a.id == uav)
        .ok_or(ProtocolError::UnknownAgent(uav))?;
    let clock = LevelClock::new(decision.target_level, config)?;
    let circle = packing.square(decision.target_square).loiter_circle();
    let plan = plan_level_transition(agent, circle, decision.target_level, &|t| clock.phase_at(t), now, config)?;
    agent.mode = Mode::Transitioning;
    agent.assigned_square = decision.target_square;
    agent.transition = Some(plan.clone());
    Ok(plan)
}

/// Places the chosen agent directly on its target circle, as it will be once
/// its transition completes at time `t`.
pub fn apply_decision_completed(
    decision: &RecoveryDecision,
    fleet: &mut [UavState],
    packing: &Packing,
    t: f64,
) -> Result<(), ProtocolError> {
    let uav = match (decision.kind, decision.chosen_uav) {
        (DecisionKind::Unrecoverable, _) | (_, None) => return Err(ProtocolError::Unrecoverable),
        (_, Some(id)) => id,
    };
    let config = &packing.config;
    let agent = fleet
        .iter_mut()
        .find(|a| a.id == uav)
        .ok_or(ProtocolError::UnknownAgent(uav))?;
    let clock = LevelClock::new(decision.target_level, config)?;
    *agent = UavState::loitering(
        uav,
        decision.target_square,
        decision.target_level,
        packing.square(decision.target_square).loiter_circle(),
        clock.phase_at(t),
        config,
    )
    .map_err(|e| match e {
        crate::fleet::FleetError::Config(c) => ProtocolError::Config(c),
        _ => ProtocolError::UnknownAgent(uav),
    })?;
    Ok(())
}

/// Marks `drops` as dropped in the fleet.
pub fn drop_agents(fleet: &mut [UavState], drops: &BTreeSet<UavId>) -> Result<(), ProtocolError> {
    for id in drops {
        let agent = fleet
            .iter_mut()
            .find(|a| a.id == *id)
            .ok_or(ProtocolError::UnknownAgent(*id))?;
        if !agent.is_live() {
            return Err(ProtocolError::AlreadyDropped(*id));
        }
        agent.mode = Mode::Dropped;
        agent.transition = None;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Heartbeat,
    DropReport,
    ClaimPromotion,
    LendRequest,
    LendGrant,
    LevelUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub from: UavId,
    pub to: UavId,
    pub kind: MessageKind,
    pub square: SquareId,
    pub level: u8,
    pub timestamp: f64,
}

/// The exchanges behind a round of decisions. Promotions stay inside the
/// target square's group; a lending pair stays inside the donor's group.
pub fn decision_messages(
    decisions: &[RecoveryDecision],
    fleet: &[UavState],
    tables: &Tables,
    packing: &Packing,
    now: f64,
) -> Vec<ProtocolMessage> {
    let mut out = Vec::new();
    for decision in decisions {
        let Some(chosen) = decision.chosen_uav else {
            continue;
        };
        let scope = match decision.kind {
            DecisionKind::Promotion => decision.target_square,
            _ => decision.donor_square.expect("lending has a donor"),
        };
        let group: Vec<UavId> = fleet
            .iter()
            .filter(|a| a.is_live() && a.id != chosen && packing.is_ancestor_or_self(scope, a.assigned_square))
            .map(|a| a.id)
            .collect();
        let msg = |from, to, kind| ProtocolMessage {
            from,
            to,
            kind,
            square: decision.target_square,
            level: decision.target_level,
            timestamp: now,
        };
        match decision.kind {
            DecisionKind::Promotion | DecisionKind::LendPrimary => {
                for &m in &group {
                    let observed = tables
                        .get(&m)
                        .is_some_and(|t| t.entries.values().any(|l| *l == Label::Dropped));
                    if observed {
                        out.push(msg(m, chosen, MessageKind::DropReport));
                    }
                }
                if decision.kind == DecisionKind::Promotion {
                    out.extend(group.iter().map(|&m| msg(chosen, m, MessageKind::ClaimPromotion)));
                }
            }
            DecisionKind::LendDeficit => {
                let primary = decisions
                    .iter()
                    .find(|d| d.kind == DecisionKind::LendPrimary && d.failed_square == decision.failed_square)
                    .and_then(|d| d.chosen_uav);
                if let Some(x1) = primary {
                    out.push(msg(x1, chosen, MessageKind::LendRequest));
                    out.push(msg(chosen, x1, MessageKind::LendGrant));
                }
            }
            DecisionKind::Unrecoverable => {}
        }
        out.extend(group.iter().map(|&m| msg(chosen, m, MessageKind::LevelUpdate)));
    }
    out
}
