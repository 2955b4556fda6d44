//! Scenario bundle and the synthetic scenario generator.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::demand::DemandMatrix;
use crate::error::{Error, Result};
use crate::network::{Edge, Node, NodeId, RoadNetwork};
use crate::plan::{ChargingPlan, ConfigTable, Depot, Station};
use crate::utility;

const KM_PER_DEG_LON: f64 = 111.32;
const KM_PER_DEG_LAT: f64 = 110.574;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: RoadNetwork,
    /// Full demand history / ground truth, possibly longer than the planning window.
    pub demand: DemandMatrix,
    pub depots: Vec<Depot>,
    pub config: ScenarioConfig,
    pub reference_plan: Option<ChargingPlan>,
}

impl Scenario {
    pub fn new(
        network: RoadNetwork,
        demand: DemandMatrix,
        depots: Vec<Depot>,
        config: ScenarioConfig,
        reference_plan: Option<ChargingPlan>,
    ) -> Result<Self> {
        config.validate()?;
        if network.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        demand.check_width(network.len())?;
        if demand.slots() == 0 {
            return Err(Error::InvalidConfig("demand needs at least one slot".into()));
        }
        for d in &depots {
            network.index_of(d.node)?;
            if !(d.recharge_power_kw > 0.0) {
                return Err(Error::InvalidConfig("depot recharge power must be positive".into()));
            }
        }
        if config.mc_count > 0 && depots.is_empty() {
            return Err(Error::InvalidConfig(
                "mobile chargers require at least one depot".into(),
            ));
        }
        let mut scenario = Self {
            network,
            demand,
            depots,
            config,
            reference_plan: None,
        };
        if let Some(mut plan) = reference_plan {
            scenario.prepare_plan(&mut plan)?;
            scenario.reference_plan = Some(plan);
        }
        Ok(scenario)
    }

    /// Brings an external plan in line with the scenario: depots default to the scenario's,
    /// fleet targets are padded or cut to the horizon, trajectories are recomputed.
    pub fn prepare_plan(&self, plan: &mut ChargingPlan) -> Result<()> {
        if plan.depots.is_empty() {
            plan.depots = self.depots.clone();
        }
        for mc in &mut plan.mcs {
            mc.targets.resize(self.config.horizon_slots, None);
        }
        plan.refresh(&self.network, &self.config)?;
        plan.validate(&self.network, &self.config)
    }

    /// No stations; `mc_count` fleets parked at the depots.
    pub fn empty_plan(&self) -> Result<ChargingPlan> {
        let mut plan = ChargingPlan::with_fleet(self.depots.clone(), &self.config)?;
        plan.refresh(&self.network, &self.config)?;
        Ok(plan)
    }

    pub fn config_table(&self) -> ConfigTable {
        ConfigTable::new(&self.config)
    }

    /// Config whose cost and loss normalizers equal the reference plan's values on `window`
    /// (1.0 where the reference value is zero or there is no reference plan).
    pub fn normalized_config(&self, window: &DemandMatrix) -> Result<ScenarioConfig> {
        normalize_config(&self.config, self.reference_plan.as_ref(), &self.network, window)
    }
}

/// `cfg` with its cost and loss normalizers taken from `reference` scored on `window`. The
/// reference is scored as is; it need not satisfy the limits of `cfg`.
pub fn normalize_config(
    cfg: &ScenarioConfig,
    reference: Option<&ChargingPlan>,
    net: &RoadNetwork,
    window: &DemandMatrix,
) -> Result<ScenarioConfig> {
    let mut cfg = cfg.clone();
    cfg.cost_norm = 1.0;
    cfg.loss_norm = 1.0;
    if let Some(reference) = reference {
        let eval = utility::evaluate_slots(reference, net, window, &cfg)?;
        if eval.breakdown.cost > 0.0 {
            cfg.cost_norm = eval.breakdown.cost;
        }
        if eval.breakdown.queuing_loss > 0.0 {
            cfg.loss_norm = eval.breakdown.queuing_loss;
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub nodes: usize,
    pub slots: usize,
    /// Side of the square the junctions are scattered over.
    pub extent_km: f64,
    /// Nearest neighbours each junction is linked to (both directions).
    pub neighbors: usize,
    /// Multiplicative road detour over straight-line distance is drawn from `[1, 1 + detour]`.
    pub detour: f64,
    pub hotspots: usize,
    pub hotspot_sigma_km: f64,
    /// Peak EV/h at a hotspot centre.
    pub hotspot_peak: f64,
    /// Relative day-cycle amplitude of hotspot intensity, in `[0, 1]`.
    pub hotspot_swing: f64,
    /// EV/h at every node on top of the hotspots.
    pub background: f64,
    /// Peak EV/h of a one-off surge hotspot; 0 disables it.
    pub surge_peak: f64,
    pub surge_start: usize,
    pub surge_slots: usize,
    pub depots: usize,
    /// Stations in the generated reference ("existing") plan.
    pub reference_stations: usize,
    pub model: ScenarioConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            nodes: 60,
            slots: 24,
            extent_km: 8.0,
            neighbors: 3,
            detour: 0.3,
            hotspots: 3,
            hotspot_sigma_km: 1.0,
            hotspot_peak: 3.0,
            hotspot_swing: 0.8,
            background: 0.05,
            surge_peak: 0.0,
            surge_start: 0,
            surge_slots: 0,
            depots: 2,
            reference_stations: 4,
            model: ScenarioConfig::default(),
        }
    }
}

/// Random connected road network with Gaussian demand hotspots whose intensity follows a
/// per-hotspot day cycle. A pure function of `(cfg, seed)`.
pub fn generate_scenario(cfg: &GeneratorConfig, seed: u64) -> Result<Scenario> {
    if cfg.nodes == 0 || cfg.slots == 0 {
        return Err(Error::InvalidConfig(
            "generator needs at least one node and one slot".into(),
        ));
    }
    if !(cfg.extent_km > 0.0) || !(cfg.hotspot_sigma_km > 0.0) || cfg.detour < 0.0 {
        return Err(Error::InvalidConfig(
            "generator extent and hotspot width must be positive".into(),
        ));
    }
    if cfg.depots > cfg.nodes || cfg.reference_stations > cfg.nodes {
        return Err(Error::InvalidConfig(
            "more depots or reference stations than nodes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(f64, f64)> = (0..cfg.nodes)
        .map(|_| {
            (
                rng.gen::<f64>() * cfg.extent_km,
                rng.gen::<f64>() * cfg.extent_km,
            )
        })
        .collect();
    let euclid = |a: usize, b: usize| {
        let (dx, dy) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
        (dx * dx + dy * dy).sqrt()
    };

    let mut links: Vec<(usize, usize)> = Vec::new();
    for a in 0..cfg.nodes {
        let mut others: Vec<usize> = (0..cfg.nodes).filter(|&b| b != a).collect();
        others.sort_by(|&x, &y| euclid(a, x).total_cmp(&euclid(a, y)).then(x.cmp(&y)));
        for &b in others.iter().take(cfg.neighbors) {
            links.push((a.min(b), a.max(b)));
        }
    }
    // Join components through their closest pair until connected.
    let mut uf = UnionFind::new(cfg.nodes);
    for &(a, b) in &links {
        uf.union(a, b);
    }
    loop {
        let root = uf.find(0);
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..cfg.nodes {
            if uf.find(a) != root {
                continue;
            }
            for b in 0..cfg.nodes {
                if uf.find(b) == root {
                    continue;
                }
                let d = euclid(a, b);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        match best {
            Some((_, a, b)) => {
                links.push((a.min(b), a.max(b)));
                uf.union(a, b);
            }
            None => break,
        }
    }
    links.sort_unstable();
    links.dedup();

    let nodes: Vec<Node> = points
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Node {
            id: NodeId(i as u32),
            lon: x / KM_PER_DEG_LON,
            lat: y / KM_PER_DEG_LAT,
        })
        .collect();
    let mut edges = Vec::with_capacity(links.len() * 2);
    for (a, b) in links {
        let base = euclid(a, b).max(0.05);
        for (from, to) in [(a, b), (b, a)] {
            let length_km = base * (1.0 + rng.gen::<f64>() * cfg.detour);
            edges.push(Edge {
                from: NodeId(from as u32),
                to: NodeId(to as u32),
                length_km,
            });
        }
    }
    let network = RoadNetwork::new(nodes, edges)?;

    struct Hotspot {
        centre: usize,
        peak: f64,
        phase: f64,
    }
    let hotspots: Vec<Hotspot> = (0..cfg.hotspots)
        .map(|_| Hotspot {
            centre: rng.gen_range(0..cfg.nodes),
            peak: cfg.hotspot_peak * rng.gen_range(0.5..=1.0),
            phase: rng.gen::<f64>() * std::f64::consts::TAU,
        })
        .collect();
    let surge_centre = (cfg.surge_peak > 0.0).then(|| rng.gen_range(0..cfg.nodes));
    let surge_slots = cfg.surge_start..cfg.surge_start.saturating_add(cfg.surge_slots);
    let day_slots = (24.0 * 60.0 / cfg.model.slot_minutes).max(1.0);
    let swing = cfg.hotspot_swing.clamp(0.0, 1.0);
    let rows: Vec<Vec<f64>> = (0..cfg.slots)
        .map(|t| {
            let angle = std::f64::consts::TAU * t as f64 / day_slots;
            (0..cfg.nodes)
                .map(|v| {
                    let sigma = cfg.hotspot_sigma_km;
                    let bump = |centre: usize| {
                        let d = euclid(v, centre);
                        (-d * d / (2.0 * sigma * sigma)).exp()
                    };
                    let mut rate = cfg.background;
                    for h in &hotspots {
                        let level = 1.0 + swing * (angle + h.phase).sin();
                        rate += h.peak * level * bump(h.centre);
                    }
                    if let Some(c) = surge_centre.filter(|_| surge_slots.contains(&t)) {
                        rate += cfg.surge_peak * bump(c);
                    }
                    rate.max(0.0)
                })
                .collect()
        })
        .collect();
    let demand = DemandMatrix::new(cfg.model.slot_minutes, rows)?;

    let mut order: Vec<usize> = (0..cfg.nodes).collect();
    order.shuffle(&mut rng);
    let depots: Vec<Depot> = order[..cfg.depots]
        .iter()
        .map(|&i| Depot {
            node: NodeId(i as u32),
            recharge_power_kw: cfg.model.depot_power_kw,
        })
        .collect();
    let model = if depots.is_empty() {
        ScenarioConfig {
            mc_count: 0,
            ..cfg.model.clone()
        }
    } else {
        cfg.model.clone()
    };

    order.shuffle(&mut rng);
    let reference = if cfg.reference_stations > 0 {
        let table = ConfigTable::new(&model);
        let peaks = demand.node_peaks();
        let mut plan = ChargingPlan {
            depots: depots.clone(),
            ..Default::default()
        };
        let smallest = table.cheapest(f64::MIN_POSITIVE)?;
        let mut spent = 0.0;
        // Stations are sized to peak arrivals, shrunk to one smallest charger when the
        // budget runs short, and dropped once even that does not fit.
        for &i in &order[..cfg.reference_stations] {
            let target = (peaks[i] * model.ev_energy_kwh).min(table.max_capacity_kw());
            let mut station = Station::fixed(NodeId(i as u32), table.cheapest(target)?);
            if station.total_chargers() == 0 || spent + station.fee(&model) > model.budget_cny {
                station = Station::fixed(NodeId(i as u32), smallest.clone());
            }
            if spent + station.fee(&model) > model.budget_cny {
                continue;
            }
            spent += station.fee(&model);
            plan.insert_station(station)?;
        }
        Some(plan)
    } else {
        None
    };
    Scenario::new(network, demand, depots, model, reference)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let cfg = GeneratorConfig::default();
        let a = generate_scenario(&cfg, 7).unwrap();
        let b = generate_scenario(&cfg, 7).unwrap();
        assert_eq!(a.demand, b.demand);
        assert_eq!(a.network.edges(), b.network.edges());
        assert_eq!(a.depots, b.depots);
        assert_eq!(a.reference_plan, b.reference_plan);
        let c = generate_scenario(&cfg, 8).unwrap();
        assert_ne!(a.demand, c.demand);
    }

    #[test]
    fn shape_and_sign() {
        let cfg = GeneratorConfig {
            nodes: 50,
            slots: 24,
            ..Default::default()
        };
        let s = generate_scenario(&cfg, 1).unwrap();
        assert_eq!((s.demand.slots(), s.demand.nodes()), (24, 50));
        assert!(s.demand.rows().iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn strongly_connected() {
        let s = generate_scenario(&GeneratorConfig::default(), 3).unwrap();
        let n = s.network.len();
        for t in 0..n {
            assert!(s.network.column(t).iter().all(|d| d.is_finite()));
        }
    }

    #[test]
    fn surge_only_raises_its_slots() {
        let calm = GeneratorConfig {
            nodes: 20,
            slots: 8,
            ..Default::default()
        };
        let surge = GeneratorConfig {
            surge_peak: 5.0,
            surge_start: 3,
            surge_slots: 2,
            ..calm.clone()
        };
        let a = generate_scenario(&calm, 4).unwrap();
        let b = generate_scenario(&surge, 4).unwrap();
        for t in 0..8 {
            let (ra, rb) = (a.demand.row(t), b.demand.row(t));
            if (3..5).contains(&t) {
                let extra: f64 = rb.iter().zip(ra).map(|(y, x)| y - x).sum();
                assert!(extra >= 5.0 - 1e-9, "slot {t} extra {extra}");
            } else {
                assert_eq!(ra, rb);
            }
        }
    }

    #[test]
    fn reference_plan_fits_the_budget() {
        let cfg = GeneratorConfig {
            nodes: 30,
            reference_stations: 10,
            model: ScenarioConfig {
                budget_cny: 20_000.0,
                ..Default::default()
            },
            ..Default::default()
        };
        for seed in 0..5 {
            let s = generate_scenario(&cfg, seed).unwrap();
            let plan = s.reference_plan.unwrap();
            assert!(crate::plan::budget_used(&plan, &s.config) <= 20_000.0);
            assert!(!plan.stations.is_empty());
        }
    }

    #[test]
    fn rejects_invalid_sizes() {
        let cfg = GeneratorConfig {
            nodes: 0,
            ..Default::default()
        };
        assert!(generate_scenario(&cfg, 0).is_err());
        let cfg = GeneratorConfig {
            slots: 0,
            ..Default::default()
        };
        assert!(generate_scenario(&cfg, 0).is_err());
    }
}
