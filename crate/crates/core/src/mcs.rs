//! Mobile-charger operation: availability discount, energy bookkeeping with depot recall,
//! and the two greedy scheduling heuristics (support overloaded stations, open flexible
//! charging areas at demand hotspots).

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::demand::DemandMatrix;
use crate::error::{Error, Result};
use crate::network::{NodeId, RoadNetwork};
use crate::plan::{budget_used, ChargingPlan, Depot, McSlot, McStart, MobileCharger, Station};
use crate::utility;

/// Fraction of slot `slot` a fleet arriving at `arrival_min` can still serve.
pub fn discount(arrival_min: f64, slot: usize, slot_minutes: f64) -> f64 {
    let late = (arrival_min - slot as f64 * slot_minutes) / slot_minutes;
    (1.0 - late.min(1.0)).clamp(0.0, 1.0)
}

/// Forward simulation of one fleet, slot by slot.
#[derive(Debug, Clone, Copy)]
struct Stepper {
    location: NodeId,
    /// Time the fleet is available at `location`.
    free_at: f64,
    /// End of the last commitment (served slot, travel or recharge). Never before `free_at`.
    busy_until: f64,
    energy: f64,
    recall_until: Option<f64>,
}

impl Stepper {
    fn new(start: &McStart) -> Self {
        let free = start.free_at_min.max(0.0);
        Self {
            location: start.node,
            free_at: free,
            busy_until: free,
            energy: start.energy_kwh,
            recall_until: None,
        }
    }

    fn step(
        &mut self,
        id: u32,
        slot: usize,
        target: Option<NodeId>,
        depots: &[Depot],
        net: &RoadNetwork,
        cfg: &ScenarioConfig,
    ) -> Result<McSlot> {
        let h = cfg.slot_minutes;
        let start = slot as f64 * h;
        let end = start + h;
        let need = cfg.fleet_slot_energy_kwh();
        let full = cfg.fleet_battery_kwh();
        let mut out = McSlot {
            location: self.location,
            accessible_min: self.free_at,
            energy_kwh: self.energy,
            discount: 0.0,
            assignment: None,
            recalling: self.recall_until.is_some_and(|u| u > start),
            delivered_kwh: 0.0,
            recharged_kwh: 0.0,
        };
        if let Some(target) = target {
            if self.energy >= need && self.busy_until < end {
                let travel = cfg.travel_minutes(net.dist(self.location, target)?);
                let arrive = self.departure(start, travel) + travel;
                let delta = discount(arrive, slot, h);
                if delta > 0.0 {
                    let delivered = (cfg.fleet_power_kw() * delta * cfg.slot_hours())
                        .max(0.0)
                        .min(self.energy);
                    self.location = target;
                    self.free_at = arrive;
                    self.busy_until = end;
                    self.energy -= delivered;
                    out.location = target;
                    out.accessible_min = arrive;
                    out.discount = delta;
                    out.assignment = Some(target);
                    out.recalling = false;
                    out.delivered_kwh = delivered;
                }
            }
        }
        if self.energy < need && self.energy < full {
            let depot = nearest_depot(self.location, depots, net).ok_or(Error::NoDepot(id))?;
            let required = full - self.energy;
            let travel = cfg.travel_minutes(net.dist(self.location, depot.node)?);
            self.free_at =
                self.busy_until.max(end) + travel + required / depot.recharge_power_kw * 60.0;
            self.busy_until = self.free_at;
            self.location = depot.node;
            self.energy = full;
            self.recall_until = Some(self.free_at);
            out.recharged_kwh = required;
        }
        Ok(out)
    }

    /// An uncommitted fleet leaves early enough to arrive at slot start, but never before
    /// the window opens (the decision time).
    fn departure(&self, slot_start: f64, travel: f64) -> f64 {
        self.busy_until.max(slot_start - travel).max(0.0)
    }

    /// Commits a departure made during slot 0 towards the slot 1 target.
    fn preposition(
        &mut self,
        target: NodeId,
        net: &RoadNetwork,
        cfg: &ScenarioConfig,
    ) -> Result<()> {
        let h = cfg.slot_minutes;
        if self.location == target || self.energy < cfg.fleet_slot_energy_kwh() {
            return Ok(());
        }
        let travel = cfg.travel_minutes(net.dist(self.location, target)?);
        if !travel.is_finite() {
            return Ok(());
        }
        let depart = self.departure(h, travel);
        if depart < h {
            self.location = target;
            self.free_at = depart + travel;
            self.busy_until = self.free_at;
        }
        Ok(())
    }

    fn shifted_start(&self, minutes: f64) -> McStart {
        McStart {
            node: self.location,
            free_at_min: (self.busy_until - minutes).max(0.0),
            energy_kwh: self.energy,
        }
    }
}

fn nearest_depot<'a>(from: NodeId, depots: &'a [Depot], net: &RoadNetwork) -> Option<&'a Depot> {
    let mut best: Option<(&Depot, f64)> = None;
    for d in depots {
        let dist = net.dist(from, d.node).ok()?;
        if !dist.is_finite() {
            continue;
        }
        if best.is_none_or(|(b, bd)| dist < bd || (dist == bd && d.node < b.node)) {
            best = Some((d, dist));
        }
    }
    best.map(|(d, _)| d)
}

/// Recomputes a fleet's per-slot state from its start state and requested targets.
///
/// A target is honoured only when the fleet has energy for a full slot and reaches the
/// target before the slot ends; otherwise the slot stays unassigned. A fleet with nothing
/// to do in the previous slot departs early so that it arrives at slot start. A fleet whose energy
/// drops below one slot's worth is recalled to the nearest depot and is unavailable for
/// the travel plus recharge time.
pub fn replay(
    mc: &MobileCharger,
    depots: &[Depot],
    net: &RoadNetwork,
    cfg: &ScenarioConfig,
) -> Result<Vec<McSlot>> {
    let mut stepper = Stepper::new(&mc.start);
    mc.targets
        .iter()
        .enumerate()
        .map(|(slot, &target)| stepper.step(mc.id, slot, target, depots, net, cfg))
        .collect()
}

/// Start state for the next window after serving slot 0 of `mc`'s targets. A fleet that
/// already left during slot 0 for its slot 1 target starts the next window at that target.
pub fn advance(
    mc: &MobileCharger,
    depots: &[Depot],
    net: &RoadNetwork,
    cfg: &ScenarioConfig,
) -> Result<(McSlot, McStart)> {
    let mut stepper = Stepper::new(&mc.start);
    let slot = stepper.step(
        mc.id,
        0,
        mc.targets.first().copied().flatten(),
        depots,
        net,
        cfg,
    )?;
    if let Some(next) = mc.targets.get(1).copied().flatten() {
        if slot.assignment != Some(next) {
            stepper.preposition(next, net, cfg)?;
        }
    }
    Ok((slot, stepper.shifted_start(cfg.slot_minutes)))
}

/// Unassigned, charged enough for a full slot, and free before the slot ends.
pub fn is_idle(mc: &MobileCharger, slot: usize, cfg: &ScenarioConfig) -> bool {
    let Some(state) = mc.trajectory.get(slot) else {
        return false;
    };
    state.assignment.is_none()
        && state.energy_kwh >= cfg.fleet_slot_energy_kwh()
        && state.accessible_min < (slot + 1) as f64 * cfg.slot_minutes
}

/// Nearest idle fleet that would arrive at `target` with a positive discount in `slot`.
fn nearest_idle(
    plan: &ChargingPlan,
    target: NodeId,
    slot: usize,
    net: &RoadNetwork,
    cfg: &ScenarioConfig,
) -> Result<Option<usize>> {
    let mut queue: Vec<(f64, u32, usize)> = Vec::new();
    for (i, mc) in plan.mcs.iter().enumerate() {
        let Some(state) = mc.trajectory.get(slot) else {
            continue;
        };
        let d = net.dist(state.location, target)?;
        if d.is_finite() {
            queue.push((d, mc.id, i));
        }
    }
    queue.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let spent = budget_used(plan, cfg);
    for (d, _, i) in queue {
        let mc = &plan.mcs[i];
        if !is_idle(mc, slot, cfg) {
            continue;
        }
        if d > 0.0 && !reaches(mc, target, slot, &plan.depots, net, cfg)? {
            continue;
        }
        if !mc.employed() && spent + cfg.mc_fee_cny > cfg.budget_cny {
            continue;
        }
        return Ok(Some(i));
    }
    Ok(None)
}

/// Whether `mc`, sent to `target` from `slot` on, would serve it in `slot`.
fn reaches(
    mc: &MobileCharger,
    target: NodeId,
    slot: usize,
    depots: &[Depot],
    net: &RoadNetwork,
    cfg: &ScenarioConfig,
) -> Result<bool> {
    let mut probe = mc.clone();
    probe.targets.truncate(slot + 1);
    probe.targets[slot] = Some(target);
    let traj = replay(&probe, depots, net, cfg)?;
    Ok(traj[slot].assignment == Some(target))
}

fn dispatch(
    plan: &mut ChargingPlan,
    mc: usize,
    target: NodeId,
    slot: usize,
    net: &RoadNetwork,
    cfg: &ScenarioConfig,
) -> Result<()> {
    for t in plan.mcs[mc].targets.iter_mut().skip(slot) {
        *t = Some(target);
    }
    plan.refresh(net, cfg)
}

/// Sends the nearest idle fleet to the station with the highest
/// `λ_c (waiting + charging) + λ_q loss` over slots `slot..`, among stations that turn EVs
/// away in `slot`. Returns the new plan and the
/// dispatched fleet id, if any.
pub fn support_stations(
    plan: &ChargingPlan,
    net: &RoadNetwork,
    window: &DemandMatrix,
    slot: usize,
    cfg: &ScenarioConfig,
) -> Result<(ChargingPlan, Option<u32>)> {
    if plan.mcs.is_empty() || plan.stations.is_empty() || slot >= window.slots() {
        return Ok((plan.clone(), None));
    }
    let eval = utility::evaluate_slots(plan, net, window, cfg)?;
    let slots = slot..window.slots();
    let mut best: Option<(usize, f64)> = None;
    for (si, detail) in eval.stations.iter().enumerate() {
        if detail.loss(slot) <= 0.0 {
            continue;
        }
        let score = detail.overload_score(slots.clone(), cfg);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((si, score));
        }
    }
    let Some((si, _)) = best else {
        return Ok((plan.clone(), None));
    };
    let target = plan.stations[si].node;
    let Some(mc) = nearest_idle(plan, target, slot, net, cfg)? else {
        return Ok((plan.clone(), None));
    };
    let mut next = plan.clone();
    dispatch(&mut next, mc, target, slot, net, cfg)?;
    Ok((next, Some(plan.mcs[mc].id)))
}

/// Opens a flexible charging area at the non-station node with the most demand over
/// slots `slot..`, staffed by the nearest idle fleet.
pub fn establish_flex_areas(
    plan: &ChargingPlan,
    net: &RoadNetwork,
    window: &DemandMatrix,
    slot: usize,
    cfg: &ScenarioConfig,
) -> Result<(ChargingPlan, Option<u32>)> {
    if plan.mcs.is_empty() || slot >= window.slots() {
        return Ok((plan.clone(), None));
    }
    let mut best: Option<(usize, f64)> = None;
    for v in 0..net.len() {
        if plan.has_station(net.id_at(v)) {
            continue;
        }
        let score: f64 = (slot..window.slots()).map(|t| window.get(t, v)).sum();
        if score > 0.0 && best.is_none_or(|(_, b)| score > b) {
            best = Some((v, score));
        }
    }
    let Some((v, _)) = best else {
        return Ok((plan.clone(), None));
    };
    let target = net.id_at(v);
    let Some(mc) = nearest_idle(plan, target, slot, net, cfg)? else {
        return Ok((plan.clone(), None));
    };
    let mut next = plan.clone();
    next.insert_station(Station::flexible(target, cfg.charger_kinds()))?;
    dispatch(&mut next, mc, target, slot, net, cfg)?;
    Ok((next, Some(plan.mcs[mc].id)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    SupportStation,
    FlexArea,
    Recall,
    Idle,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::SupportStation => "support-station",
            EventKind::FlexArea => "flex-area",
            EventKind::Recall => "recall",
            EventKind::Idle => "idle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub mc: u32,
    pub slot: usize,
    pub kind: EventKind,
    /// Station, flexible area, depot or current location.
    pub target: NodeId,
    pub arrival_min: f64,
    pub discount: f64,
}

/// One event per fleet per slot, derived from the trajectories. `slot_offset` shifts slot
/// numbers and times into absolute operation time.
pub fn events(plan: &ChargingPlan, slot_offset: usize, cfg: &ScenarioConfig) -> Vec<ScheduleEvent> {
    let offset_min = slot_offset as f64 * cfg.slot_minutes;
    let mut out = Vec::new();
    for mc in &plan.mcs {
        for (t, s) in mc.trajectory.iter().enumerate() {
            let kind = match s.assignment {
                Some(node) if plan.station_at(node).is_some_and(|st| st.temporary) => {
                    EventKind::FlexArea
                }
                Some(_) => EventKind::SupportStation,
                None if s.recalling => EventKind::Recall,
                None => EventKind::Idle,
            };
            out.push(ScheduleEvent {
                mc: mc.id,
                slot: slot_offset + t,
                kind,
                target: s.assignment.unwrap_or(s.location),
                arrival_min: s.accessible_min + offset_min,
                discount: s.discount,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Edge, Node};

    #[test]
    fn discount_examples() {
        assert_eq!(discount(60.0, 1, 60.0), 1.0);
        assert_eq!(discount(120.0, 1, 60.0), 0.0);
        assert_eq!(discount(90.0, 1, 60.0), 0.5);
        assert_eq!(discount(10.0, 1, 60.0), 1.0);
        assert_eq!(discount(500.0, 1, 60.0), 0.0);
    }

    /// depot 0 --3 km-- station 1
    fn net() -> RoadNetwork {
        let nodes = (0..2)
            .map(|i| Node {
                id: NodeId(i),
                lon: 0.0,
                lat: 0.0,
            })
            .collect();
        let edges = vec![
            Edge {
                from: NodeId(0),
                to: NodeId(1),
                length_km: 3.0,
            },
            Edge {
                from: NodeId(1),
                to: NodeId(0),
                length_km: 3.0,
            },
        ];
        RoadNetwork::new(nodes, edges).unwrap()
    }

    fn fleet(start: NodeId, targets: Vec<Option<NodeId>>) -> MobileCharger {
        MobileCharger {
            id: 0,
            start: McStart {
                node: start,
                free_at_min: 0.0,
                energy_kwh: 1050.0,
            },
            targets,
            trajectory: Vec::new(),
        }
    }

    fn depots() -> Vec<Depot> {
        vec![Depot {
            node: NodeId(0),
            recharge_power_kw: 420.0,
        }]
    }

    #[test]
    fn idle_fleet_keeps_energy() {
        let cfg = ScenarioConfig::default();
        let traj = replay(&fleet(NodeId(0), vec![None; 3]), &depots(), &net(), &cfg).unwrap();
        assert!(traj.iter().all(|s| s.energy_kwh == 1050.0 && s.assignment.is_none()));
    }

    #[test]
    fn full_slot_drains_fleet_power() {
        let cfg = ScenarioConfig::default();
        let mc = fleet(NodeId(1), vec![Some(NodeId(1)), None]);
        let traj = replay(&mc, &depots(), &net(), &cfg).unwrap();
        assert_eq!(traj[0].discount, 1.0);
        assert_eq!(traj[0].delivered_kwh, 420.0);
        assert_eq!(traj[1].energy_kwh, 1050.0 - 420.0);
    }

    #[test]
    fn recall_after_second_slot() {
        let cfg = ScenarioConfig::default();
        let mc = fleet(NodeId(1), vec![Some(NodeId(1)); 3]);
        let traj = replay(&mc, &depots(), &net(), &cfg).unwrap();
        assert_eq!(traj[1].energy_kwh, 630.0);
        // after slot 1: 210 kWh < 420 → recall, 840 kWh at 420 kW = 120 min, plus 6 min travel.
        assert_eq!(traj[1].recharged_kwh, 840.0);
        assert_eq!(traj[2].assignment, None);
        assert!(traj[2].recalling);
        assert_eq!(traj[2].location, NodeId(0));
        assert_eq!(traj[2].accessible_min, 120.0 + 6.0 + 120.0);
    }

    #[test]
    fn travel_discounts_first_slot() {
        let cfg = ScenarioConfig::default();
        let mc = fleet(NodeId(0), vec![Some(NodeId(1)), Some(NodeId(1))]);
        let traj = replay(&mc, &depots(), &net(), &cfg).unwrap();
        assert_eq!(traj[0].accessible_min, 6.0);
        assert!((traj[0].discount - 0.9).abs() < 1e-12);
        assert_eq!(traj[1].discount, 1.0);
    }

    #[test]
    fn idle_fleet_prepositions() {
        let cfg = ScenarioConfig::default();
        let mc = fleet(NodeId(0), vec![None, Some(NodeId(1))]);
        let traj = replay(&mc, &depots(), &net(), &cfg).unwrap();
        assert_eq!(traj[1].accessible_min, 60.0);
        assert_eq!(traj[1].discount, 1.0);
        let (slot, next) = advance(&mc, &depots(), &net(), &cfg).unwrap();
        assert_eq!(slot.assignment, None);
        assert_eq!((next.node, next.free_at_min), (NodeId(1), 0.0));
    }

    #[test]
    fn busy_fleet_cannot_preposition() {
        let cfg = ScenarioConfig::default();
        let mc = fleet(NodeId(0), vec![Some(NodeId(0)), Some(NodeId(1))]);
        let traj = replay(&mc, &depots(), &net(), &cfg).unwrap();
        assert_eq!(traj[1].accessible_min, 66.0);
        assert!((traj[1].discount - 0.9).abs() < 1e-12);
    }

    #[test]
    fn recall_without_depot_is_an_error() {
        let cfg = ScenarioConfig::default();
        let mc = fleet(NodeId(1), vec![Some(NodeId(1)); 2]);
        assert_eq!(replay(&mc, &[], &net(), &cfg), Err(Error::NoDepot(0)));
    }

    #[test]
    fn advance_shifts_time() {
        let cfg = ScenarioConfig::default();
        let mc = fleet(NodeId(0), vec![Some(NodeId(1))]);
        let (slot, next) = advance(&mc, &depots(), &net(), &cfg).unwrap();
        assert_eq!(slot.assignment, Some(NodeId(1)));
        assert_eq!(next.node, NodeId(1));
        assert_eq!(next.free_at_min, 0.0);
        assert!((next.energy_kwh - (1050.0 - 378.0)).abs() < 1e-9);
    }
}
