//! Rolling-horizon utility model: capacity, influence radius, coverage, station assignment,
//! capped M/D/1 queueing, and the aggregate benefit / cost / queuing-loss utility.
//!
//! Units: capacities in kW, rates in EV/h, times in hours, distances in km.
//! Stations with zero capacity in a slot (an unstaffed flexible area, or a fleet still on its
//! way) neither cover nor attract demand in that slot.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::demand::DemandMatrix;
use crate::error::{Error, Result};
use crate::network::{NodeId, RoadNetwork};
use crate::plan::{ChargingPlan, Station};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QueueStats {
    /// μ = C / B.
    pub service_rate: f64,
    /// Raw arrivals D.
    pub arrivals: f64,
    /// D_max, the arrival rate whose mean wait equals the cap.
    pub arrival_cap: f64,
    /// Corrected arrivals D̃ = min(D, D_max).
    pub served: f64,
    /// Corrected mean wait W̃ in hours.
    pub wait_h: f64,
    /// ρ = D̃ / μ.
    pub utilization: f64,
}

impl QueueStats {
    pub fn loss(&self) -> f64 {
        (self.arrivals - self.served).max(0.0)
    }

    /// Hours of charging per hour of operation.
    pub fn charging_h(&self) -> f64 {
        if self.service_rate > 0.0 {
            self.served / self.service_rate
        } else {
            0.0
        }
    }

    pub fn waiting_h(&self) -> f64 {
        self.served * self.wait_h
    }
}

/// Pollaczek–Khinchine mean wait of an M/D/1 queue, `ρ / (2μ(1 − ρ))`.
pub fn md1_wait(utilization: f64, service_rate: f64) -> f64 {
    utilization / (2.0 * service_rate * (1.0 - utilization))
}

/// Largest arrival rate whose M/D/1 mean wait stays within `max_wait_h`.
pub fn arrival_cap(capacity_kw: f64, ev_energy_kwh: f64, max_wait_h: f64) -> f64 {
    let c = capacity_kw;
    let b = ev_energy_kwh;
    2.0 * max_wait_h * c * c / ((2.0 * max_wait_h * c + b) * b)
}

/// Queue statistics of a station with capacity `capacity_kw` facing `arrivals` EV/h.
pub fn queue_stats(capacity_kw: f64, arrivals: f64, cfg: &ScenarioConfig) -> QueueStats {
    let w_max = cfg.max_wait_hours();
    if capacity_kw <= 0.0 {
        return QueueStats {
            service_rate: 0.0,
            arrivals,
            arrival_cap: 0.0,
            served: 0.0,
            wait_h: w_max,
            utilization: 0.0,
        };
    }
    let mu = capacity_kw / cfg.ev_energy_kwh;
    let cap = arrival_cap(capacity_kw, cfg.ev_energy_kwh, w_max);
    if arrivals >= cap {
        QueueStats {
            service_rate: mu,
            arrivals,
            arrival_cap: cap,
            served: cap,
            wait_h: w_max,
            utilization: cap / mu,
        }
    } else {
        let rho = arrivals / mu;
        let wait = if arrivals > 0.0 {
            md1_wait(rho, mu).min(w_max)
        } else {
            0.0
        };
        QueueStats {
            service_rate: mu,
            arrivals,
            arrival_cap: cap,
            served: arrivals,
            wait_h: wait,
            utilization: rho,
        }
    }
}

/// Influence radius `R_max / (1 + exp(-(C - C0) / s0))`.
pub fn influence_radius(capacity_kw: f64, cfg: &ScenarioConfig) -> f64 {
    let scaled = (capacity_kw - cfg.capacity_offset_kw) / cfg.capacity_scale_kw;
    cfg.max_radius_km / (1.0 + (-scaled).exp())
}

/// Capacity of `station` during `slot`: fixed chargers plus every fleet assigned to it,
/// discounted by the fraction of the slot the fleet is actually there.
pub fn capacity(station: &Station, plan: &ChargingPlan, slot: usize, cfg: &ScenarioConfig) -> f64 {
    let mobile: f64 = plan
        .mcs
        .iter()
        .filter_map(|m| m.trajectory.get(slot))
        .filter(|s| s.assignment == Some(station.node))
        .map(|s| cfg.fleet_power_kw() * s.discount)
        .sum();
    station.fixed_capacity_kw(cfg) + mobile
}

/// `H_n = 1 + 1/2 + ... + 1/n`.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UtilityBreakdown {
    pub benefit: f64,
    pub travel_h: f64,
    pub charging_h: f64,
    pub waiting_h: f64,
    /// EV/h turned away by the waiting cap, summed over slots.
    pub queuing_loss: f64,
    pub cost: f64,
    pub utility: f64,
    /// Mean EV/h per slot at nodes with no reachable station. Reported, not scored.
    pub unserved: f64,
}

/// Unnormalized per-slot terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SlotTerms {
    /// Sum over nodes of the harmonic coverage value (not yet divided by |V|).
    pub coverage_sum: f64,
    pub travel_h: f64,
    pub charging_h: f64,
    pub waiting_h: f64,
    pub queuing_loss: f64,
    pub unserved: f64,
}

/// Per-station, per-slot detail aligned with `plan.stations`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StationDetail {
    pub node: NodeId,
    pub capacity_kw: Vec<f64>,
    pub radius_km: Vec<f64>,
    pub queue: Vec<QueueStats>,
    /// Share of the coverage sum attributed to this station, per slot.
    pub coverage_share: Vec<f64>,
}

impl StationDetail {
    pub fn waiting_h(&self, slot: usize) -> f64 {
        self.queue[slot].waiting_h()
    }

    pub fn charging_h(&self, slot: usize) -> f64 {
        self.queue[slot].charging_h()
    }

    pub fn loss(&self, slot: usize) -> f64 {
        self.queue[slot].loss()
    }

    /// `λ_c (waiting + charging) + λ_q loss` summed over `slots`.
    pub fn overload_score(&self, slots: std::ops::Range<usize>, cfg: &ScenarioConfig) -> f64 {
        slots
            .map(|t| {
                cfg.lambda_cost * (self.waiting_h(t) + self.charging_h(t))
                    + cfg.lambda_queue * self.loss(t)
            })
            .sum()
    }

    pub fn benefit_share(&self) -> f64 {
        self.coverage_share.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub breakdown: UtilityBreakdown,
    pub slots: Vec<SlotTerms>,
    pub stations: Vec<StationDetail>,
    /// Mean number of covering stations per node over the window.
    pub node_coverage: Vec<f64>,
    /// Nearest serving station per slot per node (index into `plan.stations`).
    pub assignment: Vec<Vec<Option<usize>>>,
}

/// Full evaluation of `plan` over the window `demand`, which must span `cfg.horizon_slots`.
pub fn evaluate(
    plan: &ChargingPlan,
    net: &RoadNetwork,
    demand: &DemandMatrix,
    cfg: &ScenarioConfig,
) -> Result<Evaluation> {
    if demand.slots() != cfg.horizon_slots {
        return Err(Error::HorizonMismatch {
            expected: cfg.horizon_slots,
            got: demand.slots(),
        });
    }
    evaluate_slots(plan, net, demand, cfg)
}

/// Same as [`evaluate`] without the horizon-length check.
pub fn evaluate_slots(
    plan: &ChargingPlan,
    net: &RoadNetwork,
    demand: &DemandMatrix,
    cfg: &ScenarioConfig,
) -> Result<Evaluation> {
    demand.check_width(net.len())?;
    let slots = demand.slots();
    let n = net.len();
    let station_idx: Vec<usize> = plan
        .stations
        .iter()
        .map(|s| net.index_of(s.node))
        .collect::<Result<_>>()?;
    let columns: Vec<&[f64]> = station_idx.iter().map(|&i| net.column(i)).collect();

    let mut details: Vec<StationDetail> = plan
        .stations
        .iter()
        .map(|s| StationDetail {
            node: s.node,
            ..Default::default()
        })
        .collect();
    let mut slot_terms = Vec::with_capacity(slots);
    let mut node_coverage = vec![0.0; n];
    let mut assignment = Vec::with_capacity(slots);

    for t in 0..slots {
        let caps: Vec<f64> = plan
            .stations
            .iter()
            .map(|s| capacity(s, plan, t, cfg))
            .collect();
        let radii: Vec<f64> = caps.iter().map(|&c| influence_radius(c, cfg)).collect();
        let mut arrivals = vec![0.0; plan.stations.len()];
        let mut shares = vec![0.0; plan.stations.len()];
        let mut terms = SlotTerms::default();
        let mut slot_assignment = vec![None; n];
        let mut covering = Vec::new();

        for v in 0..n {
            let dem = demand.get(t, v);
            covering.clear();
            let mut nearest: Option<(usize, f64)> = None;
            for (si, col) in columns.iter().enumerate() {
                if caps[si] <= 0.0 {
                    continue;
                }
                let d = col[v];
                if d < radii[si] {
                    covering.push(si);
                }
                if d.is_finite() && nearest.is_none_or(|(_, best)| d < best) {
                    nearest = Some((si, d));
                }
            }
            let h = harmonic(covering.len());
            terms.coverage_sum += h;
            node_coverage[v] += covering.len() as f64;
            if !covering.is_empty() {
                let share = h / covering.len() as f64;
                for &si in &covering {
                    shares[si] += share;
                }
            }
            match nearest {
                Some((si, d)) => {
                    slot_assignment[v] = Some(si);
                    terms.travel_h += d / cfg.speed_kmh * dem;
                    arrivals[si] += dem / d.max(cfg.min_distance_km);
                }
                None => terms.unserved += dem,
            }
        }

        for (si, detail) in details.iter_mut().enumerate() {
            let q = queue_stats(caps[si], arrivals[si], cfg);
            terms.charging_h += q.charging_h();
            terms.waiting_h += q.waiting_h();
            terms.queuing_loss += q.loss();
            detail.capacity_kw.push(caps[si]);
            detail.radius_km.push(radii[si]);
            detail.queue.push(q);
            detail
                .coverage_share
                .push(shares[si] / (n as f64 * slots as f64));
        }
        slot_terms.push(terms);
        assignment.push(slot_assignment);
    }

    if slots > 0 {
        node_coverage.iter_mut().for_each(|c| *c /= slots as f64);
    }
    let breakdown = aggregate(&slot_terms, n, cfg);
    Ok(Evaluation {
        breakdown,
        slots: slot_terms,
        stations: details,
        node_coverage,
        assignment,
    })
}

/// Combine per-slot terms into the window-level breakdown.
pub fn aggregate(slots: &[SlotTerms], nodes: usize, cfg: &ScenarioConfig) -> UtilityBreakdown {
    let count = slots.len().max(1) as f64;
    let sum = |f: fn(&SlotTerms) -> f64| slots.iter().map(f).sum::<f64>();
    let benefit = if nodes == 0 {
        0.0
    } else {
        sum(|s| s.coverage_sum) / (nodes as f64 * count)
    };
    let travel_h = sum(|s| s.travel_h) / count;
    let charging_h = sum(|s| s.charging_h) / count;
    let waiting_h = sum(|s| s.waiting_h) / count;
    let queuing_loss = sum(|s| s.queuing_loss);
    let unserved = sum(|s| s.unserved) / count;
    let cost = cfg.alpha * travel_h + (1.0 - cfg.alpha) * (waiting_h + charging_h);
    let utility = cfg.lambda_benefit * benefit
        - cfg.lambda_cost * cost / cfg.cost_norm
        - cfg.lambda_queue * queuing_loss / cfg.loss_norm;
    UtilityBreakdown {
        benefit,
        travel_h,
        charging_h,
        waiting_h,
        queuing_loss,
        cost,
        utility,
        unserved,
    }
}

/// Active stations covering node `v` in `slot`, in station order.
pub fn coverage(
    plan: &ChargingPlan,
    net: &RoadNetwork,
    v: NodeId,
    slot: usize,
    cfg: &ScenarioConfig,
) -> Result<Vec<NodeId>> {
    let vi = net.index_of(v)?;
    let mut out = Vec::new();
    for s in &plan.stations {
        let c = capacity(s, plan, slot, cfg);
        if c <= 0.0 {
            continue;
        }
        let d = net.dist_idx(vi, net.index_of(s.node)?);
        if d < influence_radius(c, cfg) {
            out.push(s.node);
        }
    }
    Ok(out)
}

/// Station an EV at `v` seeks: the nearest reachable one among `candidates`, lowest node id on ties.
pub fn assign_station<'a>(
    candidates: impl IntoIterator<Item = &'a Station>,
    net: &RoadNetwork,
    v: NodeId,
) -> Result<Option<&'a Station>> {
    let vi = net.index_of(v)?;
    let mut best: Option<(&Station, f64)> = None;
    for s in candidates {
        let d = net.dist_idx(vi, net.index_of(s.node)?);
        if !d.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && s.node < b.node),
        };
        if better {
            best = Some((s, d));
        }
    }
    Ok(best.map(|(s, _)| s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Edge, Node};

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn arrival_cap_defaults() {
        // 2 * 0.5 * 79^2 / ((2 * 0.5 * 79 + 35) * 35) = 6241 / 3990
        approx(arrival_cap(79.0, 35.0, 0.5), 6241.0 / 3990.0, 1e-12);
        approx(arrival_cap(79.0, 35.0, 0.5), 1.5642, 1e-4);
    }

    #[test]
    fn md1_wait_half_load() {
        let mu = 79.0 / 35.0;
        approx(md1_wait(0.5, mu), 0.5 / (2.0 * mu * 0.5), 1e-15);
        approx(md1_wait(0.5, mu), 0.2215, 1e-4);
    }

    #[test]
    fn cap_inverts_wait() {
        let cfg = ScenarioConfig::default();
        for c in [7.0, 79.0, 420.0, 1250.0] {
            let cap = arrival_cap(c, cfg.ev_energy_kwh, cfg.max_wait_hours());
            let mu = c / cfg.ev_energy_kwh;
            approx(md1_wait(cap / mu, mu), cfg.max_wait_hours(), 1e-12);
        }
    }

    #[test]
    fn queue_stats_cases() {
        let cfg = ScenarioConfig::default();
        let empty = queue_stats(79.0, 0.0, &cfg);
        assert_eq!((empty.served, empty.wait_h, empty.utilization), (0.0, 0.0, 0.0));
        let cap = arrival_cap(79.0, 35.0, 0.5);
        let over = queue_stats(79.0, 2.0 * cap, &cfg);
        assert_eq!(over.served, cap);
        assert_eq!(over.wait_h, 0.5);
        approx(over.loss(), cap, 1e-12);
        let dead = queue_stats(0.0, 3.0, &cfg);
        assert_eq!((dead.service_rate, dead.served, dead.wait_h), (0.0, 0.0, 0.5));
        assert_eq!(dead.loss(), 3.0);
    }

    #[test]
    fn radius_examples() {
        let cfg = ScenarioConfig::default();
        assert_eq!(influence_radius(275.0, &cfg), 1.25);
        approx(influence_radius(1e9, &cfg), 2.5, 1e-12);
        // 2.5 / (1 + e^2.75)
        approx(influence_radius(0.0, &cfg), 2.5 / (1.0 + 2.75f64.exp()), 1e-15);
        approx(influence_radius(0.0, &cfg), 0.1502, 1e-4);
    }

    #[test]
    fn harmonic_sums() {
        assert_eq!(harmonic(0), 0.0);
        assert_eq!(harmonic(1), 1.0);
        approx(harmonic(3), 11.0 / 6.0, 1e-15);
    }

    fn two_node_net() -> RoadNetwork {
        let nodes = (0..3)
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
                length_km: 1.0,
            },
            Edge {
                from: NodeId(0),
                to: NodeId(2),
                length_km: 1.0,
            },
        ];
        RoadNetwork::new(nodes, edges).unwrap()
    }

    #[test]
    fn coverage_compares_distance_to_radius() {
        let net = two_node_net();
        let cfg = ScenarioConfig {
            charger_types: vec![crate::config::ChargerType {
                power_kw: 1.0,
                fee_cny: 1.0,
            }],
            max_chargers: 1000,
            ..Default::default()
        };
        // R = 1.2 needs sigmoid 0.48, R = 0.9 needs 0.36.
        let cap_for = |r: f64| {
            let p: f64 = r / cfg.max_radius_km;
            cfg.capacity_offset_kw + cfg.capacity_scale_kw * (p / (1.0 - p)).ln()
        };
        let c1 = cap_for(1.2).round() as u32;
        let c2 = cap_for(0.9).round() as u32;
        let r1 = influence_radius(f64::from(c1), &cfg);
        let r2 = influence_radius(f64::from(c2), &cfg);
        assert!(r1 > 1.0 && r2 < 1.0, "{r1} {r2}");
        let mut plan = ChargingPlan::default();
        plan.insert_station(Station::fixed(NodeId(1), vec![c1])).unwrap();
        plan.insert_station(Station::fixed(NodeId(2), vec![c2])).unwrap();
        assert_eq!(
            coverage(&plan, &net, NodeId(0), 0, &cfg).unwrap(),
            vec![NodeId(1)]
        );
        assert_eq!(
            coverage(&plan, &net, NodeId(1), 0, &cfg).unwrap(),
            vec![NodeId(1)]
        );
        assert!(coverage(&ChargingPlan::default(), &net, NodeId(0), 0, &cfg)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn assignment_tie_breaks_on_node_id() {
        let nodes = (0..8)
            .map(|i| Node {
                id: NodeId(i),
                lon: 0.0,
                lat: 0.0,
            })
            .collect();
        let edges = vec![
            Edge {
                from: NodeId(0),
                to: NodeId(7),
                length_km: 2.0,
            },
            Edge {
                from: NodeId(0),
                to: NodeId(3),
                length_km: 2.0,
            },
        ];
        let net = RoadNetwork::new(nodes, edges).unwrap();
        let stations = [
            Station::fixed(NodeId(7), vec![1]),
            Station::fixed(NodeId(3), vec![1]),
        ];
        let s = assign_station(&stations, &net, NodeId(0)).unwrap().unwrap();
        assert_eq!(s.node, NodeId(3));
        assert!(assign_station(&stations, &net, NodeId(5)).unwrap().is_none());
        assert_eq!(
            assign_station(&stations[..1], &net, NodeId(0))
                .unwrap()
                .unwrap()
                .node,
            NodeId(7)
        );
    }
}
