//! Rolling-horizon operation: each slot the fleets are re-planned against a forecast of the
//! coming window, the first slot is committed and scored against the observed demand.

use serde::{Deserialize, Serialize};

use super::env::schedule_fleets;
use crate::config::ScenarioConfig;
use crate::demand::{DemandMatrix, Forecaster};
use crate::error::{Error, Result};
use crate::mcs::{self, ScheduleEvent};
use crate::network::RoadNetwork;
use crate::plan::{budget_used, ChargingPlan};
use crate::utility::{self, SlotTerms, UtilityBreakdown};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperateOptions {
    pub mcs1: bool,
    pub mcs2: bool,
    pub repeat_scheduling: bool,
}

impl Default for OperateOptions {
    fn default() -> Self {
        Self {
            mcs1: true,
            mcs2: true,
            repeat_scheduling: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: usize,
    pub breakdown: UtilityBreakdown,
    pub terms: SlotTerms,
    pub stations: usize,
    pub flexible_areas: usize,
    pub fleets_assigned: usize,
    /// Fleet energy at the start of the slot, by fleet id order.
    pub fleet_energy_kwh: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationReport {
    pub start_slot: usize,
    pub slots: Vec<SlotReport>,
    pub events: Vec<ScheduleEvent>,
    /// All operated slots scored together.
    pub total: UtilityBreakdown,
    pub budget_used_cny: f64,
}

/// Operates `plan` over `slots` slots starting at `start` of `truth`.
///
/// Fixed stations come from `plan`. Fleets start from their recorded start state and are
/// dispatched only by the enabled heuristics; assignments carried in `plan` are dropped, so
/// with both heuristics off the fleets never move.
#[allow(clippy::too_many_arguments)]
pub fn operate_mpc(
    plan: &ChargingPlan,
    net: &RoadNetwork,
    truth: &DemandMatrix,
    forecaster: &Forecaster,
    start: usize,
    slots: usize,
    cfg: &ScenarioConfig,
    opts: &OperateOptions,
) -> Result<OperationReport> {
    truth.check_width(net.len())?;
    if start + slots > truth.slots() {
        return Err(Error::InvalidConfig(format!(
            "operating slots {start}..{} needs that many demand rows, scenario has {}",
            start + slots,
            truth.slots()
        )));
    }
    let horizon = cfg.horizon_slots;
    let mut working = plan.clone();
    working.stations.retain(|s| !s.temporary);
    for mc in &mut working.mcs {
        mc.targets = vec![None; horizon];
    }
    working.refresh(net, cfg)?;
    let mut spent: f64 = 0.0;

    let mut reports = Vec::with_capacity(slots);
    let mut terms_all = Vec::with_capacity(slots);
    let mut events = Vec::new();
    for t in start..start + slots {
        let window = forecaster.window(truth, t, horizon)?;
        if opts.mcs1 || opts.mcs2 {
            working = schedule_fleets(
                working,
                net,
                &window,
                cfg,
                opts.mcs1,
                opts.mcs2,
                opts.repeat_scheduling,
            )?;
        }
        let observed = truth.window(t, 1)?;
        let eval = utility::evaluate_slots(&working, net, &observed, cfg)?;
        let terms = eval.slots[0];
        events.extend(
            mcs::events(&working, t, cfg)
                .into_iter()
                .filter(|e| e.slot == t),
        );
        spent = spent.max(budget_used(&working, cfg));
        reports.push(SlotReport {
            slot: t,
            breakdown: eval.breakdown,
            terms,
            stations: working.stations.iter().filter(|s| !s.temporary).count(),
            flexible_areas: working.stations.iter().filter(|s| s.temporary).count(),
            fleets_assigned: working
                .mcs
                .iter()
                .filter(|m| m.assigned_at(0).is_some())
                .count(),
            fleet_energy_kwh: working
                .mcs
                .iter()
                .map(|m| m.trajectory.first().map_or(m.start.energy_kwh, |s| s.energy_kwh))
                .collect(),
        });
        terms_all.push(terms);
        commit_first_slot(&mut working, net, cfg)?;
    }
    Ok(OperationReport {
        start_slot: start,
        slots: reports,
        events,
        total: utility::aggregate(&terms_all, net.len(), cfg),
        budget_used_cny: spent,
    })
}

/// Moves every fleet past slot 0 and shifts its targets one slot, repeating the last one.
fn commit_first_slot(plan: &mut ChargingPlan, net: &RoadNetwork, cfg: &ScenarioConfig) -> Result<()> {
    let depots = plan.depots.clone();
    for mc in &mut plan.mcs {
        let (_, next) = mcs::advance(mc, &depots, net, cfg)?;
        mc.start = next;
        if !mc.targets.is_empty() {
            mc.targets.remove(0);
            let last = mc.targets.last().copied().flatten();
            mc.targets.push(last);
        }
    }
    plan.refresh(net, cfg)
}
