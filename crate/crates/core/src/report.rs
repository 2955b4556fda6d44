//! Metrics reports: absolute breakdowns plus percentages against the reference plan.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::utility::{SlotTerms, UtilityBreakdown};

/// Each field is `100 · value / reference value`. `None` when the reference value is zero
/// and the value is not (the ratio is undefined); two zeros count as 100%.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentages {
    pub benefit_pct: Option<f64>,
    pub travel_pct: Option<f64>,
    pub charging_pct: Option<f64>,
    pub waiting_pct: Option<f64>,
    pub queuing_loss_pct: Option<f64>,
    pub cost_pct: Option<f64>,
}

fn percent(value: f64, reference: f64) -> Option<f64> {
    if reference != 0.0 {
        Some(100.0 * (value / reference))
    } else if value == 0.0 {
        Some(100.0)
    } else {
        None
    }
}

impl Percentages {
    pub fn of(b: &UtilityBreakdown, reference: &UtilityBreakdown) -> Self {
        Self {
            benefit_pct: percent(b.benefit, reference.benefit),
            travel_pct: percent(b.travel_h, reference.travel_h),
            charging_pct: percent(b.charging_h, reference.charging_h),
            waiting_pct: percent(b.waiting_h, reference.waiting_h),
            queuing_loss_pct: percent(b.queuing_loss, reference.queuing_loss),
            cost_pct: percent(b.cost, reference.cost),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachMetrics {
    pub name: String,
    pub breakdown: UtilityBreakdown,
    /// Against the reference plan, when the scenario has one.
    pub percent_of_reference: Option<Percentages>,
    pub slots: Vec<SlotTerms>,
    pub budget_used_cny: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config_hash: String,
    pub start_slot: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub reference: Option<UtilityBreakdown>,
    pub approaches: Vec<ApproachMetrics>,
    pub meta: RunMeta,
}

impl MetricsReport {
    /// Merges several reports; approaches keep their order, the first reference and
    /// metadata win, runtimes add up.
    pub fn merge(reports: &[MetricsReport]) -> Option<MetricsReport> {
        let first = reports.first()?;
        let mut out = first.clone();
        for r in &reports[1..] {
            out.approaches.extend(r.approaches.iter().cloned());
            out.meta.runtime_s += r.meta.runtime_s;
        }
        Some(out)
    }

    /// One row per approach, Table-1 style.
    pub fn table_rows(&self) -> Vec<TableRow> {
        self.approaches
            .iter()
            .map(|a| {
                let p = a.percent_of_reference;
                TableRow {
                    approach: a.name.clone(),
                    utility: a.breakdown.utility,
                    benefit: a.breakdown.benefit,
                    benefit_pct: p.and_then(|p| p.benefit_pct),
                    travel_h: a.breakdown.travel_h,
                    travel_pct: p.and_then(|p| p.travel_pct),
                    charging_h: a.breakdown.charging_h,
                    charging_pct: p.and_then(|p| p.charging_pct),
                    waiting_h: a.breakdown.waiting_h,
                    waiting_pct: p.and_then(|p| p.waiting_pct),
                    queuing_loss_ev: a.breakdown.queuing_loss,
                    queuing_loss_pct: p.and_then(|p| p.queuing_loss_pct),
                    cost_h: a.breakdown.cost,
                    cost_pct: p.and_then(|p| p.cost_pct),
                    budget_used_cny: a.budget_used_cny,
                }
            })
            .collect()
    }
}

/// Flat record for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub approach: String,
    pub utility: f64,
    pub benefit: f64,
    pub benefit_pct: Option<f64>,
    pub travel_h: f64,
    pub travel_pct: Option<f64>,
    pub charging_h: f64,
    pub charging_pct: Option<f64>,
    pub waiting_h: f64,
    pub waiting_pct: Option<f64>,
    pub queuing_loss_ev: f64,
    pub queuing_loss_pct: Option<f64>,
    pub cost_h: f64,
    pub cost_pct: Option<f64>,
    pub budget_used_cny: f64,
}

pub fn approach(
    name: &str,
    breakdown: UtilityBreakdown,
    slots: Vec<SlotTerms>,
    budget_used_cny: f64,
    reference: Option<&UtilityBreakdown>,
) -> ApproachMetrics {
    ApproachMetrics {
        name: name.to_string(),
        percent_of_reference: reference.map(|r| Percentages::of(&breakdown, r)),
        breakdown,
        slots,
        budget_used_cny,
    }
}

/// Hex digest of the configuration's JSON form; identifies runs made with equal settings.
pub fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    let text = serde_json::to_string(cfg)?;
    let mut h = DefaultHasher::new();
    text.hash(&mut h);
    Ok(format!("{:016x}", h.finish()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> UtilityBreakdown {
        UtilityBreakdown {
            benefit: 0.5,
            travel_h: 2.0,
            charging_h: 1.0,
            waiting_h: 0.0,
            queuing_loss: 3.0,
            cost: 1.4,
            utility: 0.1,
            unserved: 0.0,
        }
    }

    #[test]
    fn reference_is_100_percent_everywhere() {
        let r = sample();
        let p = Percentages::of(&r, &r);
        for v in [
            p.benefit_pct,
            p.travel_pct,
            p.charging_pct,
            p.waiting_pct,
            p.queuing_loss_pct,
            p.cost_pct,
        ] {
            assert_eq!(v, Some(100.0));
        }
    }

    #[test]
    fn zero_reference_with_nonzero_value_is_undefined() {
        let r = sample();
        let mut b = sample();
        b.waiting_h = 1.0;
        b.benefit = 1.0;
        let p = Percentages::of(&b, &r);
        assert_eq!(p.waiting_pct, None);
        assert_eq!(p.benefit_pct, Some(200.0));
    }

    #[test]
    fn config_hash_tracks_changes() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.budget_cny += 1.0;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }
}
