//! Model parameters shared by planning, evaluation and operation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed charger type: rated power and installation fee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargerType {
    pub power_kw: f64,
    pub fee_cny: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Weight of travel time against waiting + charging time in the cost.
    pub alpha: f64,
    pub lambda_benefit: f64,
    pub lambda_cost: f64,
    pub lambda_queue: f64,
    /// Maximum fixed chargers per station.
    pub max_chargers: u32,
    pub budget_cny: f64,
    /// Energy delivered per EV recharge.
    pub ev_energy_kwh: f64,
    pub max_radius_km: f64,
    pub slot_minutes: f64,
    /// Number of slots in the planning window.
    pub horizon_slots: usize,
    pub max_wait_minutes: f64,
    pub mc_count: usize,
    /// Physical units per mobile-charger fleet record.
    pub mc_batch: u32,
    pub mc_power_kw: f64,
    pub mc_battery_kwh: f64,
    pub mc_fee_cny: f64,
    pub speed_kmh: f64,
    pub charger_types: Vec<ChargerType>,
    /// Capacity at which the influence radius is half of `max_radius_km`.
    pub capacity_offset_kw: f64,
    pub capacity_scale_kw: f64,
    /// Lower clamp on distances used as divisors.
    pub min_distance_km: f64,
    pub depot_power_kw: f64,
    /// Divisor applied to cost inside the utility. Filled from the reference plan when present.
    pub cost_norm: f64,
    /// Divisor applied to queuing loss inside the utility.
    pub loss_norm: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            lambda_benefit: 0.4,
            lambda_cost: 0.4,
            lambda_queue: 0.2,
            max_chargers: 25,
            budget_cny: 5.4e7,
            ev_energy_kwh: 35.0,
            max_radius_km: 2.5,
            slot_minutes: 60.0,
            horizon_slots: 3,
            max_wait_minutes: 30.0,
            mc_count: 30,
            mc_batch: 10,
            mc_power_kw: 42.0,
            mc_battery_kwh: 105.0,
            mc_fee_cny: 59400.0,
            speed_kmh: 30.0,
            charger_types: vec![
                ChargerType {
                    power_kw: 7.0,
                    fee_cny: 2700.0,
                },
                ChargerType {
                    power_kw: 22.0,
                    fee_cny: 6750.0,
                },
                ChargerType {
                    power_kw: 50.0,
                    fee_cny: 252000.0,
                },
            ],
            capacity_offset_kw: 275.0,
            capacity_scale_kw: 100.0,
            min_distance_km: 0.1,
            depot_power_kw: 420.0,
            cost_norm: 1.0,
            loss_norm: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn charger_kinds(&self) -> usize {
        self.charger_types.len()
    }

    pub fn slot_hours(&self) -> f64 {
        self.slot_minutes / 60.0
    }

    pub fn max_wait_hours(&self) -> f64 {
        self.max_wait_minutes / 60.0
    }

    /// Aggregate output of one mobile-charger fleet record.
    pub fn fleet_power_kw(&self) -> f64 {
        self.mc_power_kw * f64::from(self.mc_batch)
    }

    pub fn fleet_battery_kwh(&self) -> f64 {
        self.mc_battery_kwh * f64::from(self.mc_batch)
    }

    /// Energy a fleet needs to serve one whole slot.
    pub fn fleet_slot_energy_kwh(&self) -> f64 {
        self.fleet_power_kw() * self.slot_hours()
    }

    pub fn travel_minutes(&self, km: f64) -> f64 {
        km / self.speed_kmh * 60.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        for (name, w) in [
            ("lambda_benefit", self.lambda_benefit),
            ("lambda_cost", self.lambda_cost),
            ("lambda_queue", self.lambda_queue),
            ("budget_cny", self.budget_cny),
            ("mc_fee_cny", self.mc_fee_cny),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative")));
            }
        }
        for (name, q) in [
            ("ev_energy_kwh", self.ev_energy_kwh),
            ("max_radius_km", self.max_radius_km),
            ("slot_minutes", self.slot_minutes),
            ("max_wait_minutes", self.max_wait_minutes),
            ("mc_power_kw", self.mc_power_kw),
            ("mc_battery_kwh", self.mc_battery_kwh),
            ("speed_kmh", self.speed_kmh),
            ("capacity_scale_kw", self.capacity_scale_kw),
            ("min_distance_km", self.min_distance_km),
            ("depot_power_kw", self.depot_power_kw),
            ("cost_norm", self.cost_norm),
            ("loss_norm", self.loss_norm),
        ] {
            if !(q > 0.0) || !q.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.horizon_slots == 0 {
            return bad("horizon_slots must be at least 1");
        }
        if self.mc_batch == 0 {
            return bad("mc_batch must be at least 1");
        }
        if self.charger_types.is_empty() {
            return bad("at least one charger type is required");
        }
        for ct in &self.charger_types {
            if !(ct.power_kw > 0.0) || !(ct.fee_cny >= 0.0) {
                return bad("charger types need positive power and non-negative fee");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.fleet_power_kw(), 420.0);
        assert_eq!(cfg.fleet_battery_kwh(), 1050.0);
        assert_eq!(cfg.fleet_slot_energy_kwh(), 420.0);
        assert_eq!(cfg.travel_minutes(3.0), 6.0);
    }

    #[test]
    fn rejects_out_of_range() {
        let cfg = ScenarioConfig {
            alpha: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ScenarioConfig {
            charger_types: vec![],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: ScenarioConfig = serde_json::from_str(r#"{"max_chargers": 8}"#).unwrap();
        assert_eq!(cfg.max_chargers, 8);
        assert_eq!(cfg.alpha, 0.4);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
