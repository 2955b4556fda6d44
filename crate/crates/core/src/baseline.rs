//! Highest-demand placement baseline.

use crate::config::ScenarioConfig;
use crate::demand::DemandMatrix;
use crate::error::Result;
use crate::network::RoadNetwork;
use crate::plan::{budget_used, ChargingPlan, ConfigTable, Depot, Station};

/// Visits nodes by descending total demand over `window` and opens a station sized to the
/// node's peak arrivals (`B · peak`, at least one smallest charger) wherever the remaining
/// budget allows. Fleets stay parked, so they cost nothing.
pub fn highest_demand_baseline(
    net: &RoadNetwork,
    window: &DemandMatrix,
    cfg: &ScenarioConfig,
    depots: Vec<Depot>,
) -> Result<ChargingPlan> {
    window.check_width(net.len())?;
    let mut plan = ChargingPlan::with_fleet(depots, cfg)?;
    if cfg.max_chargers == 0 {
        plan.refresh(net, cfg)?;
        return Ok(plan);
    }
    let table = ConfigTable::new(cfg);
    let smallest = cfg
        .charger_types
        .iter()
        .map(|c| c.power_kw)
        .fold(f64::INFINITY, f64::min);
    let totals = window.node_totals();
    let peaks = window.node_peaks();
    let mut order: Vec<usize> = (0..net.len()).collect();
    // stable sort keeps the lower index first on ties
    order.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]));

    let mut spent = budget_used(&plan, cfg);
    for v in order {
        let target = (cfg.ev_energy_kwh * peaks[v])
            .max(smallest)
            .min(table.max_capacity_kw());
        let station = Station::fixed(net.id_at(v), table.cheapest(target)?);
        let fee = station.fee(cfg);
        if spent + fee <= cfg.budget_cny {
            spent += fee;
            plan.insert_station(station)?;
        }
    }
    plan.refresh(net, cfg)?;
    Ok(plan)
}
