//! Charging plans: fixed stations, mobile-charger fleets and depots, plus budget accounting
//! and the cheapest-configuration lookup table.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::mcs;
use crate::network::{NodeId, RoadNetwork};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Station {
    pub node: NodeId,
    /// Fixed chargers per type, aligned with `ScenarioConfig::charger_types`.
    pub chargers: Vec<u32>,
    /// Flexible charging area staffed only by mobile chargers.
    #[serde(default)]
    pub temporary: bool,
}

impl Station {
    pub fn fixed(node: NodeId, chargers: Vec<u32>) -> Self {
        Self {
            node,
            chargers,
            temporary: false,
        }
    }

    pub fn flexible(node: NodeId, kinds: usize) -> Self {
        Self {
            node,
            chargers: vec![0; kinds],
            temporary: true,
        }
    }

    pub fn total_chargers(&self) -> u32 {
        self.chargers.iter().sum()
    }

    pub fn fixed_capacity_kw(&self, cfg: &ScenarioConfig) -> f64 {
        self.chargers
            .iter()
            .zip(&cfg.charger_types)
            .map(|(&x, ct)| f64::from(x) * ct.power_kw)
            .sum()
    }

    pub fn fee(&self, cfg: &ScenarioConfig) -> f64 {
        self.chargers
            .iter()
            .zip(&cfg.charger_types)
            .map(|(&x, ct)| f64::from(x) * ct.fee_cny)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Depot {
    pub node: NodeId,
    pub recharge_power_kw: f64,
}

/// Where a fleet stands before the first slot of the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McStart {
    pub node: NodeId,
    /// Minutes from window start until the fleet is free (travelling or recharging before that).
    pub free_at_min: f64,
    pub energy_kwh: f64,
}

/// Derived state of one fleet during one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSlot {
    pub location: NodeId,
    /// Minutes from window start at which the fleet is available at `location`.
    pub accessible_min: f64,
    /// Energy at slot start.
    pub energy_kwh: f64,
    pub discount: f64,
    pub assignment: Option<NodeId>,
    pub recalling: bool,
    pub delivered_kwh: f64,
    pub recharged_kwh: f64,
}

/// A batch of `mc_batch` mobile chargers that move together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileCharger {
    pub id: u32,
    pub start: McStart,
    /// Requested target per slot. The effective assignment is in `trajectory`.
    pub targets: Vec<Option<NodeId>>,
    #[serde(default)]
    pub trajectory: Vec<McSlot>,
}

impl MobileCharger {
    pub fn employed(&self) -> bool {
        self.trajectory.iter().any(|s| s.assignment.is_some())
    }

    pub fn assigned_at(&self, slot: usize) -> Option<NodeId> {
        self.trajectory.get(slot).and_then(|s| s.assignment)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChargingPlan {
    /// Sorted by node id; at most one station per node.
    pub stations: Vec<Station>,
    #[serde(default, rename = "mobile_chargers")]
    pub mcs: Vec<MobileCharger>,
    #[serde(default)]
    pub depots: Vec<Depot>,
}

impl ChargingPlan {
    /// Plan without stations whose fleets wait, fully charged, at the depots (round-robin).
    pub fn with_fleet(depots: Vec<Depot>, cfg: &ScenarioConfig) -> Result<Self> {
        if cfg.mc_count > 0 && depots.is_empty() {
            return Err(Error::InvalidConfig(
                "mobile chargers require at least one depot".into(),
            ));
        }
        let mcs = (0..cfg.mc_count)
            .map(|i| MobileCharger {
                id: i as u32,
                start: McStart {
                    node: depots[i % depots.len()].node,
                    free_at_min: 0.0,
                    energy_kwh: cfg.fleet_battery_kwh(),
                },
                targets: vec![None; cfg.horizon_slots],
                trajectory: Vec::new(),
            })
            .collect();
        Ok(Self {
            stations: Vec::new(),
            mcs,
            depots,
        })
    }

    pub fn station_at(&self, node: NodeId) -> Option<&Station> {
        self.stations
            .binary_search_by_key(&node, |s| s.node)
            .ok()
            .map(|i| &self.stations[i])
    }

    pub fn station_index(&self, node: NodeId) -> Option<usize> {
        self.stations.binary_search_by_key(&node, |s| s.node).ok()
    }

    pub fn has_station(&self, node: NodeId) -> bool {
        self.station_index(node).is_some()
    }

    /// Inserts keeping node order. Fails if the node already hosts a station.
    pub fn insert_station(&mut self, station: Station) -> Result<()> {
        match self.stations.binary_search_by_key(&station.node, |s| s.node) {
            Ok(_) => Err(Error::InvalidPlan(format!(
                "node {} already hosts a station",
                station.node
            ))),
            Err(pos) => {
                self.stations.insert(pos, station);
                Ok(())
            }
        }
    }

    pub fn permanent_stations(&self) -> impl Iterator<Item = (usize, &Station)> {
        self.stations.iter().enumerate().filter(|(_, s)| !s.temporary)
    }

    pub fn horizon(&self) -> usize {
        self.mcs.first().map_or(0, |m| m.targets.len())
    }

    /// Recomputes every fleet trajectory from its targets and drops unstaffed flexible areas.
    /// Targets without a station are cleared first, so trajectories always match the
    /// targets that remain.
    pub fn refresh(&mut self, net: &RoadNetwork, cfg: &ScenarioConfig) -> Result<()> {
        loop {
            for mc in &mut self.mcs {
                for target in mc.targets.iter_mut() {
                    if target.is_some_and(|node| !self.stations.iter().any(|s| s.node == node)) {
                        *target = None;
                    }
                }
                mc.trajectory = mcs::replay(mc, &self.depots, net, cfg)?;
            }
            let staffed: Vec<NodeId> = self
                .mcs
                .iter()
                .flat_map(|m| m.trajectory.iter().filter_map(|s| s.assignment))
                .collect();
            let before = self.stations.len();
            self.stations
                .retain(|s| !s.temporary || staffed.contains(&s.node));
            if self.stations.len() == before {
                return Ok(());
            }
        }
    }

    pub fn validate(&self, net: &RoadNetwork, cfg: &ScenarioConfig) -> Result<()> {
        let kinds = cfg.charger_kinds();
        for pair in self.stations.windows(2) {
            if pair[0].node >= pair[1].node {
                return Err(Error::InvalidPlan(
                    "stations must be sorted by node with at most one per node".into(),
                ));
            }
        }
        for s in &self.stations {
            net.index_of(s.node)?;
            if s.chargers.len() != kinds {
                return Err(Error::InvalidPlan(format!(
                    "station {} lists {} charger types, config has {kinds}",
                    s.node,
                    s.chargers.len()
                )));
            }
            if s.total_chargers() > cfg.max_chargers {
                return Err(Error::InvalidPlan(format!(
                    "station {} exceeds {} chargers",
                    s.node, cfg.max_chargers
                )));
            }
            if s.temporary && s.total_chargers() > 0 {
                return Err(Error::InvalidPlan(format!(
                    "flexible area {} cannot hold fixed chargers",
                    s.node
                )));
            }
        }
        for d in &self.depots {
            net.index_of(d.node)?;
            if !(d.recharge_power_kw > 0.0) {
                return Err(Error::InvalidPlan("depot recharge power must be positive".into()));
            }
        }
        for m in &self.mcs {
            net.index_of(m.start.node)?;
            for t in m.targets.iter().flatten() {
                if !self.has_station(*t) {
                    return Err(Error::InvalidPlan(format!(
                        "mobile charger {} targets node {t} which hosts no station",
                        m.id
                    )));
                }
            }
        }
        let used = budget_used(self, cfg);
        if used > cfg.budget_cny {
            return Err(Error::InvalidPlan(format!(
                "plan spends {used} CNY, budget is {}",
                cfg.budget_cny
            )));
        }
        Ok(())
    }
}

/// Installation fees of all fixed chargers plus the operating fee of every employed fleet.
pub fn budget_used(plan: &ChargingPlan, cfg: &ScenarioConfig) -> f64 {
    let fixed: f64 = plan.stations.iter().map(|s| s.fee(cfg)).sum();
    let employed = plan.mcs.iter().filter(|m| m.employed()).count();
    fixed + employed as f64 * cfg.mc_fee_cny
}

#[derive(Debug, Clone, PartialEq)]
struct ConfigEntry {
    capacity_kw: f64,
    fee: f64,
    chargers: Vec<u32>,
}

impl ConfigEntry {
    fn total(&self) -> u32 {
        self.chargers.iter().sum()
    }

    /// Fee first, then fewer chargers, then lexicographically smaller.
    fn better_than(&self, other: &ConfigEntry) -> bool {
        self.fee
            .total_cmp(&other.fee)
            .then(self.total().cmp(&other.total()))
            .then_with(|| self.chargers.cmp(&other.chargers))
            .is_lt()
    }
}

/// Every configuration with at most `max_chargers` chargers, indexed for "cheapest
/// configuration reaching a target capacity" queries.
#[derive(Debug, Clone)]
pub struct ConfigTable {
    /// Ascending capacity.
    entries: Vec<ConfigEntry>,
    /// `best_from[i]` = index of the best entry among `entries[i..]`.
    best_from: Vec<usize>,
    max_chargers: u32,
}

impl ConfigTable {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let kinds = cfg.charger_kinds();
        let mut entries = Vec::new();
        let mut current = vec![0u32; kinds];
        enumerate(&mut current, 0, cfg.max_chargers, &mut |x| {
            let entry = ConfigEntry {
                capacity_kw: x
                    .iter()
                    .zip(&cfg.charger_types)
                    .map(|(&n, ct)| f64::from(n) * ct.power_kw)
                    .sum(),
                fee: x
                    .iter()
                    .zip(&cfg.charger_types)
                    .map(|(&n, ct)| f64::from(n) * ct.fee_cny)
                    .sum(),
                chargers: x.to_vec(),
            };
            entries.push(entry);
        });
        entries.sort_by(|a, b| a.capacity_kw.total_cmp(&b.capacity_kw));
        let mut best_from = vec![0; entries.len()];
        for i in (0..entries.len()).rev() {
            best_from[i] = if i + 1 < entries.len()
                && !entries[i].better_than(&entries[best_from[i + 1]])
            {
                best_from[i + 1]
            } else {
                i
            };
        }
        Self {
            entries,
            best_from,
            max_chargers: cfg.max_chargers,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All configurations in ascending capacity order.
    pub fn entries(&self) -> impl Iterator<Item = &[u32]> {
        self.entries.iter().map(|e| e.chargers.as_slice())
    }

    pub fn max_capacity_kw(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.capacity_kw)
    }

    /// Cheapest charger vector whose total power reaches `target_kw`.
    pub fn cheapest(&self, target_kw: f64) -> Result<Vec<u32>> {
        let start = self
            .entries
            .partition_point(|e| e.capacity_kw < target_kw);
        if start == self.entries.len() {
            return Err(Error::UnreachableCapacity {
                target_kw,
                max_chargers: self.max_chargers,
            });
        }
        Ok(self.entries[self.best_from[start]].chargers.clone())
    }
}

fn enumerate(current: &mut Vec<u32>, pos: usize, remaining: u32, f: &mut impl FnMut(&[u32])) {
    if pos == current.len() {
        f(current);
        return;
    }
    for n in 0..=remaining {
        current[pos] = n;
        enumerate(current, pos + 1, remaining - n, f);
    }
    current[pos] = 0;
}

/// Convenience wrapper building the table on the fly.
pub fn cheapest_config(target_kw: f64, cfg: &ScenarioConfig) -> Result<Vec<u32>> {
    ConfigTable::new(cfg).cheapest(target_kw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_cheapest(target: f64, cfg: &ScenarioConfig) -> Option<(f64, u32, Vec<u32>)> {
        let mut best: Option<(f64, u32, Vec<u32>)> = None;
        let k = cfg.max_chargers;
        for a in 0..=k {
            for b in 0..=k - a {
                for c in 0..=k - a - b {
                    let x = vec![a, b, c];
                    let cap: f64 = x
                        .iter()
                        .zip(&cfg.charger_types)
                        .map(|(&n, t)| f64::from(n) * t.power_kw)
                        .sum();
                    if cap < target {
                        continue;
                    }
                    let fee: f64 = x
                        .iter()
                        .zip(&cfg.charger_types)
                        .map(|(&n, t)| f64::from(n) * t.fee_cny)
                        .sum();
                    let cand = (fee, a + b + c, x);
                    let replace = match &best {
                        None => true,
                        Some(cur) => {
                            cand.0 < cur.0
                                || (cand.0 == cur.0
                                    && (cand.1 < cur.1 || (cand.1 == cur.1 && cand.2 < cur.2)))
                        }
                    };
                    if replace {
                        best = Some(cand);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn cheapest_matches_enumeration() {
        let cfg = ScenarioConfig::default();
        let table = ConfigTable::new(&cfg);
        assert_eq!(table.len(), 3276);
        // Frozen from the brute force above.
        assert_eq!(table.cheapest(0.0).unwrap(), vec![0, 0, 0]);
        assert_eq!(table.cheapest(7.0).unwrap(), vec![1, 0, 0]);
        assert_eq!(table.cheapest(50.0).unwrap(), vec![1, 2, 0]);
        for target in [0.0, 7.0, 50.0, 1.0, 29.0, 100.0, 333.3, 550.0, 1250.0] {
            let (_, _, x) = brute_force_cheapest(target, &cfg).unwrap();
            assert_eq!(table.cheapest(target).unwrap(), x, "target {target}");
        }
        assert!(matches!(
            table.cheapest(1250.1),
            Err(Error::UnreachableCapacity { .. })
        ));
    }

    #[test]
    fn budget_examples() {
        let cfg = ScenarioConfig {
            mc_count: 1,
            horizon_slots: 1,
            ..Default::default()
        };
        let depot = Depot {
            node: NodeId(0),
            recharge_power_kw: 420.0,
        };
        let mut plan = ChargingPlan::with_fleet(vec![depot], &cfg).unwrap();
        assert_eq!(budget_used(&plan, &cfg), 0.0);
        plan.insert_station(Station::fixed(NodeId(0), vec![1, 0, 0]))
            .unwrap();
        assert_eq!(budget_used(&plan, &cfg), 2700.0);
        plan.stations[0].chargers = vec![0, 1, 0];
        plan.mcs[0].trajectory = vec![McSlot {
            location: NodeId(0),
            accessible_min: 0.0,
            energy_kwh: 1050.0,
            discount: 1.0,
            assignment: Some(NodeId(0)),
            recalling: false,
            delivered_kwh: 420.0,
            recharged_kwh: 0.0,
        }];
        assert_eq!(budget_used(&plan, &cfg), 66150.0);
    }

    #[test]
    fn one_station_per_node() {
        let mut plan = ChargingPlan::default();
        plan.insert_station(Station::fixed(NodeId(4), vec![1])).unwrap();
        plan.insert_station(Station::fixed(NodeId(1), vec![1])).unwrap();
        assert!(plan.insert_station(Station::fixed(NodeId(4), vec![2])).is_err());
        let nodes: Vec<_> = plan.stations.iter().map(|s| s.node).collect();
        assert_eq!(nodes, vec![NodeId(1), NodeId(4)]);
    }
}
