//! The five neighbourhood moves over charging plans. Every move yields a new plan or
//! `None` when it is masked (no valid target, charger limit or budget exceeded).

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::demand::DemandMatrix;
use crate::error::Result;
use crate::network::{NodeId, RoadNetwork};
use crate::plan::{budget_used, ChargingPlan, ConfigTable, Station};
use crate::utility::Evaluation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    CreateByDemand,
    CreateByBenefit,
    IncreaseByDemand,
    IncreaseByBenefit,
    Relocate,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::CreateByDemand,
        Action::CreateByBenefit,
        Action::IncreaseByDemand,
        Action::IncreaseByBenefit,
        Action::Relocate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::CreateByDemand => "create-by-demand",
            Action::CreateByBenefit => "create-by-benefit",
            Action::IncreaseByDemand => "increase-by-demand",
            Action::IncreaseByBenefit => "increase-by-benefit",
            Action::Relocate => "relocate",
        }
    }
}

/// Everything a move needs besides the plan itself.
pub struct ActionContext<'a> {
    pub net: &'a RoadNetwork,
    pub window: &'a DemandMatrix,
    pub cfg: &'a ScenarioConfig,
    pub table: &'a ConfigTable,
}

/// Applies `action` to `plan`. `eval` must be the evaluation of `plan` on `ctx.window`.
pub fn apply_action(
    plan: &ChargingPlan,
    eval: &Evaluation,
    action: Action,
    ctx: &ActionContext<'_>,
) -> Result<Option<ChargingPlan>> {
    let next = match action {
        Action::CreateByDemand => {
            let totals = ctx.window.node_totals();
            let pick = argbest(plan, ctx.net, |v| totals[v], true);
            match pick {
                Some(v) => create_at(plan, v, ctx)?,
                None => None,
            }
        }
        Action::CreateByBenefit => {
            let pick = argbest(plan, ctx.net, |v| -eval.node_coverage[v], true);
            match pick {
                Some(v) => create_at(plan, v, ctx)?,
                None => None,
            }
        }
        Action::IncreaseByDemand => {
            let totals = ctx.window.node_totals();
            let hottest = argbest(plan, ctx.net, |v| totals[v], false);
            hottest.and_then(|v| increase_near(plan, v, ctx))
        }
        Action::IncreaseByBenefit => {
            let coldest = argbest(plan, ctx.net, |v| -eval.node_coverage[v], false);
            coldest.and_then(|v| increase_near(plan, v, ctx))
        }
        Action::Relocate => relocate(plan, eval, ctx),
    };
    let Some(mut next) = next else {
        return Ok(None);
    };
    next.refresh(ctx.net, ctx.cfg)?;
    if budget_used(&next, ctx.cfg) > ctx.cfg.budget_cny {
        return Ok(None);
    }
    Ok(Some(next))
}

/// Index of the node maximizing `score` (lowest index on ties), optionally skipping
/// every node that hosts a station.
fn argbest(
    plan: &ChargingPlan,
    net: &RoadNetwork,
    score: impl Fn(usize) -> f64,
    skip_stations: bool,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for v in 0..net.len() {
        if skip_stations && plan.has_station(net.id_at(v)) {
            continue;
        }
        let s = score(v);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((v, s));
        }
    }
    best.map(|(v, _)| v)
}

/// Cheapest configuration whose capacity serves the node's peak arrival rate.
fn creation_config(v: usize, ctx: &ActionContext<'_>) -> Result<Vec<u32>> {
    let peak = (0..ctx.window.slots())
        .map(|t| ctx.window.get(t, v))
        .fold(0.0, f64::max);
    let smallest = ctx
        .cfg
        .charger_types
        .iter()
        .map(|c| c.power_kw)
        .fold(f64::INFINITY, f64::min);
    let target = (ctx.cfg.ev_energy_kwh * peak)
        .max(smallest)
        .min(ctx.table.max_capacity_kw());
    ctx.table.cheapest(target)
}

fn create_at(plan: &ChargingPlan, v: usize, ctx: &ActionContext<'_>) -> Result<Option<ChargingPlan>> {
    if ctx.cfg.max_chargers == 0 {
        return Ok(None);
    }
    let chargers = creation_config(v, ctx)?;
    let mut next = plan.clone();
    next.insert_station(Station::fixed(ctx.net.id_at(v), chargers))?;
    Ok(Some(next))
}

/// Permanent station closest to node index `v` (lowest node id on ties).
fn nearest_permanent(plan: &ChargingPlan, net: &RoadNetwork, v: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (si, s) in plan.permanent_stations() {
        let Ok(idx) = net.index_of(s.node) else {
            continue;
        };
        let d = net.dist_idx(v, idx);
        if d.is_finite() && best.is_none_or(|(_, b)| d < b) {
            best = Some((si, d));
        }
    }
    best.map(|(si, _)| si)
}

/// Cheapest charger type; the lowest index wins ties.
fn cheapest_kind(cfg: &ScenarioConfig) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cfg.charger_types.iter().enumerate() {
        if best.is_none_or(|(_, f)| c.fee_cny < f) {
            best = Some((i, c.fee_cny));
        }
    }
    best.map(|(i, _)| i)
}

fn increase_near(plan: &ChargingPlan, v: usize, ctx: &ActionContext<'_>) -> Option<ChargingPlan> {
    let si = nearest_permanent(plan, ctx.net, v)?;
    let kind = cheapest_kind(ctx.cfg)?;
    if plan.stations[si].total_chargers() >= ctx.cfg.max_chargers {
        return None;
    }
    let mut next = plan.clone();
    next.stations[si].chargers[kind] += 1;
    Some(next)
}

/// Moves one charger of the most powerful type present from the permanent station with the
/// smallest benefit share to the one with the highest overload score. A donor left without
/// chargers is removed.
fn relocate(plan: &ChargingPlan, eval: &Evaluation, ctx: &ActionContext<'_>) -> Option<ChargingPlan> {
    let permanent: Vec<usize> = plan.permanent_stations().map(|(i, _)| i).collect();
    if permanent.len() < 2 {
        return None;
    }
    let mut donor: Option<(usize, f64)> = None;
    for &si in &permanent {
        let share = eval.stations[si].benefit_share();
        if donor.is_none_or(|(_, b)| share < b) {
            donor = Some((si, share));
        }
    }
    let (donor, _) = donor?;
    let slots = 0..ctx.window.slots();
    let mut receiver: Option<(usize, f64)> = None;
    for &si in permanent.iter().filter(|&&si| si != donor) {
        let score = eval.stations[si].overload_score(slots.clone(), ctx.cfg);
        if receiver.is_none_or(|(_, b)| score > b) {
            receiver = Some((si, score));
        }
    }
    let (receiver, _) = receiver?;
    if plan.stations[receiver].total_chargers() >= ctx.cfg.max_chargers {
        return None;
    }
    let kind = plan.stations[donor]
        .chargers
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0)
        .max_by(|a, b| {
            let pa = ctx.cfg.charger_types[a.0].power_kw;
            let pb = ctx.cfg.charger_types[b.0].power_kw;
            pa.total_cmp(&pb).then(b.0.cmp(&a.0))
        })
        .map(|(i, _)| i)?;
    let mut next = plan.clone();
    next.stations[donor].chargers[kind] -= 1;
    next.stations[receiver].chargers[kind] += 1;
    if next.stations[donor].total_chargers() == 0 {
        let node: NodeId = next.stations[donor].node;
        next.stations.retain(|s| s.node != node);
    }
    Some(next)
}
