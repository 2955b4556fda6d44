//! Independent checks for the analytic model: an event-level M/D/1 queue simulation and an
//! exhaustive planner for small instances.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::demand::DemandMatrix;
use crate::error::{Error, Result};
use crate::network::RoadNetwork;
use crate::plan::{ChargingPlan, ConfigTable, Station};
use crate::utility::{self, UtilityBreakdown};

const BATCHES: usize = 30;
/// Two-sided 95% Student t quantile with `BATCHES - 1` degrees of freedom.
const T_QUANTILE: f64 = 2.045;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueSimResult {
    /// Mean wait in queue of admitted EVs, hours.
    pub mean_wait_h: f64,
    pub served: u64,
    pub balked: u64,
    /// Half-width of the 95% batch-means interval around `mean_wait_h`.
    pub ci_half_width_h: f64,
}

impl QueueSimResult {
    pub fn balk_fraction(&self) -> f64 {
        let total = self.served + self.balked;
        if total == 0 {
            0.0
        } else {
            self.balked as f64 / total as f64
        }
    }
}

/// Single FIFO server with Poisson arrivals and deterministic service.
///
/// With `w_max` set, an arriving EV balks when the number already in the system times the
/// service time exceeds `w_max`.
pub fn simulate_md1(
    arrival_rate: f64,
    service_time_h: f64,
    n_arrivals: u64,
    w_max_h: Option<f64>,
    seed: u64,
) -> Result<QueueSimResult> {
    if !(arrival_rate >= 0.0) || !(service_time_h > 0.0) {
        return Err(Error::InvalidConfig(
            "arrival rate must be non-negative and service time positive".into(),
        ));
    }
    let rho = arrival_rate * service_time_h;
    if w_max_h.is_none() && rho >= 1.0 {
        return Err(Error::UnstableQueue { rho });
    }
    if arrival_rate == 0.0 || n_arrivals == 0 {
        return Ok(QueueSimResult {
            mean_wait_h: 0.0,
            served: 0,
            balked: 0,
            ci_half_width_h: 0.0,
        });
    }
    let gaps = Exp::new(arrival_rate).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_system: VecDeque<f64> = VecDeque::new();
    let batch_len = (n_arrivals / BATCHES as u64).max(1);

    let mut clock = 0.0;
    let mut last_departure = 0.0_f64;
    let (mut served, mut balked) = (0_u64, 0_u64);
    let mut total_wait = 0.0;
    let mut batch_sums = vec![(0.0, 0_u64); BATCHES];

    for i in 0..n_arrivals {
        clock += gaps.sample(&mut rng);
        while in_system.front().is_some_and(|&d| d <= clock) {
            in_system.pop_front();
        }
        if let Some(w_max) = w_max_h {
            if in_system.len() as f64 * service_time_h > w_max {
                balked += 1;
                continue;
            }
        }
        let wait = (last_departure - clock).max(0.0);
        last_departure = clock + wait + service_time_h;
        in_system.push_back(last_departure);
        served += 1;
        total_wait += wait;
        let b = ((i / batch_len) as usize).min(BATCHES - 1);
        batch_sums[b].0 += wait;
        batch_sums[b].1 += 1;
    }

    let mean = if served > 0 {
        total_wait / served as f64
    } else {
        0.0
    };
    let means: Vec<f64> = batch_sums
        .iter()
        .filter(|(_, n)| *n > 0)
        .map(|(s, n)| s / *n as f64)
        .collect();
    let half_width = if means.len() > 1 {
        let k = means.len() as f64;
        let m = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
        T_QUANTILE * (var / k).sqrt()
    } else {
        0.0
    };
    Ok(QueueSimResult {
        mean_wait_h: mean,
        served,
        balked,
        ci_half_width_h: half_width,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub plan: ChargingPlan,
    pub breakdown: UtilityBreakdown,
    /// Plans scored (after budget pruning).
    pub evaluated: u64,
}

/// Scores every affordable assignment of charger configurations to nodes and returns the
/// best plan. Enumeration visits stations at lower node ids first, and the first plan found
/// keeps ties (within a relative 1e-12).
pub fn brute_force(
    net: &RoadNetwork,
    window: &DemandMatrix,
    cfg: &ScenarioConfig,
    cap: u128,
) -> Result<BruteForceResult> {
    if cfg.mc_count > 0 {
        return Err(Error::InvalidConfig(
            "exhaustive search covers fixed stations only; set mc_count to 0".into(),
        ));
    }
    let table = ConfigTable::new(cfg);
    let options: Vec<(Vec<u32>, f64)> = table
        .entries()
        .filter(|c| c.iter().any(|&x| x > 0))
        .map(|c| {
            let fee = Station::fixed(net.id_at(0), c.to_vec()).fee(cfg);
            (c.to_vec(), fee)
        })
        .collect();
    let per_node = options.len() as u128 + 1;
    let size = (0..net.len()).try_fold(1u128, |acc, _| acc.checked_mul(per_node));
    match size {
        Some(s) if s <= cap => {}
        other => {
            return Err(Error::EnumerationCap {
                size: other.unwrap_or(u128::MAX),
                cap,
            })
        }
    }

    let mut search = Search {
        net,
        window,
        cfg,
        options: &options,
        best: None,
        evaluated: 0,
        current: ChargingPlan::default(),
    };
    search.descend(0, 0.0)?;
    let (plan, breakdown) = search.best.expect("the empty plan is always scored");
    Ok(BruteForceResult {
        plan,
        breakdown,
        evaluated: search.evaluated,
    })
}

struct Search<'a> {
    net: &'a RoadNetwork,
    window: &'a DemandMatrix,
    cfg: &'a ScenarioConfig,
    options: &'a [(Vec<u32>, f64)],
    best: Option<(ChargingPlan, UtilityBreakdown)>,
    evaluated: u64,
    current: ChargingPlan,
}

impl Search<'_> {
    fn descend(&mut self, v: usize, spent: f64) -> Result<()> {
        if v == self.net.len() {
            let b = utility::evaluate_slots(&self.current, self.net, self.window, self.cfg)?
                .breakdown;
            self.evaluated += 1;
            let better = match &self.best {
                None => true,
                Some((_, best)) => {
                    b.utility > best.utility + 1e-12 * best.utility.abs().max(1.0)
                }
            };
            if better {
                self.best = Some((self.current.clone(), b));
            }
            return Ok(());
        }
        let node = self.net.id_at(v);
        for (chargers, fee) in self.options {
            if spent + fee > self.cfg.budget_cny {
                continue;
            }
            self.current
                .stations
                .push(Station::fixed(node, chargers.clone()));
            self.descend(v + 1, spent + fee)?;
            self.current.stations.pop();
        }
        self.descend(v + 1, spent)
    }
}
