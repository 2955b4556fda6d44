//! Per-node, per-slot charging demand and the forecasters that extend it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NodeId, RoadNetwork};

/// Demand rates in EV/h, one row per slot, one column per node (dense index order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandMatrix {
    pub slot_minutes: f64,
    #[serde(rename = "rates_ev_per_h")]
    rows: Vec<Vec<f64>>,
}

impl DemandMatrix {
    pub fn new(slot_minutes: f64, rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::DemandShape {
                    expected: width,
                    got: row.len(),
                });
            }
            if let Some((c, &v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
            {
                return Err(Error::InvalidDemand {
                    slot: t,
                    column: c,
                    value: v,
                });
            }
        }
        Ok(Self { slot_minutes, rows })
    }

    pub fn zeros(slot_minutes: f64, slots: usize, nodes: usize) -> Self {
        Self {
            slot_minutes,
            rows: vec![vec![0.0; nodes]; slots],
        }
    }

    pub fn slots(&self) -> usize {
        self.rows.len()
    }

    pub fn nodes(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, slot: usize) -> &[f64] {
        &self.rows[slot]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    #[inline]
    pub fn get(&self, slot: usize, node: usize) -> f64 {
        self.rows[slot][node]
    }

    pub fn set(&mut self, slot: usize, node: usize, value: f64) {
        assert!(
            value >= 0.0 && value.is_finite(),
            "demand must be finite and non-negative"
        );
        self.rows[slot][node] = value;
    }

    /// Rows `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.slots() {
            return Err(Error::InsufficientHistory {
                slot: start,
                needed: start + len,
                available: self.slots(),
            });
        }
        Ok(Self {
            slot_minutes: self.slot_minutes,
            rows: self.rows[start..start + len].to_vec(),
        })
    }

    /// Sum over slots for each node.
    pub fn node_totals(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.nodes()];
        for row in &self.rows {
            for (acc, v) in totals.iter_mut().zip(row) {
                *acc += v;
            }
        }
        totals
    }

    /// Peak slot value for each node.
    pub fn node_peaks(&self) -> Vec<f64> {
        let mut peaks = vec![0.0f64; self.nodes()];
        for row in &self.rows {
            for (acc, v) in peaks.iter_mut().zip(row) {
                *acc = acc.max(*v);
            }
        }
        peaks
    }

    pub fn check_width(&self, nodes: usize) -> Result<()> {
        if self.nodes() != nodes && !self.rows.is_empty() {
            return Err(Error::DemandShape {
                expected: nodes,
                got: self.nodes(),
            });
        }
        Ok(())
    }
}

/// Spread each station's per-slot demand over all nodes by inverse distance to the station.
///
/// A node's weight for station `s` is `1 / max(dist(v, s), min_distance_km)`, normalized over
/// all nodes; nodes that cannot reach `s` get no share. Per-slot totals are preserved.
pub fn allocate_demand(
    station_series: &BTreeMap<NodeId, Vec<f64>>,
    net: &RoadNetwork,
    slot_minutes: f64,
    min_distance_km: f64,
) -> Result<DemandMatrix> {
    if net.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let slots = station_series.values().map(Vec::len).max().unwrap_or(0);
    let mut out = DemandMatrix::zeros(slot_minutes, slots, net.len());
    for (&station, series) in station_series {
        let s = net.index_of(station)?;
        if series.len() != slots {
            return Err(Error::InvalidPlan(format!(
                "station {station} series has {} slots, expected {slots}",
                series.len()
            )));
        }
        let weights: Vec<f64> = (0..net.len())
            .map(|v| {
                let d = net.dist_idx(v, s);
                if d.is_finite() {
                    1.0 / d.max(min_distance_km)
                } else {
                    0.0
                }
            })
            .collect();
        let norm: f64 = weights.iter().sum();
        for (t, &amount) in series.iter().enumerate() {
            if !(amount >= 0.0) || !amount.is_finite() {
                return Err(Error::InvalidDemand {
                    slot: t,
                    column: s,
                    value: amount,
                });
            }
            for (v, w) in weights.iter().enumerate() {
                out.rows[t][v] += amount * w / norm;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ForecastKind {
    /// Per-node mean of the last `history_slots` observations.
    HistoricalAverage,
    /// Value from one season earlier.
    SeasonalNaive { season: usize },
    /// Simple exponential smoothing over the last `history_slots` observations.
    ExponentialSmoothing { smoothing: f64 },
    /// Reads the true future. Stands in for perfect knowledge of future demand.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    pub kind: ForecastKind,
    pub history_slots: usize,
    pub horizon_slots: usize,
}

impl Forecaster {
    pub fn new(kind: ForecastKind, history_slots: usize, horizon_slots: usize) -> Result<Self> {
        if history_slots == 0 || horizon_slots == 0 {
            return Err(Error::InvalidConfig(
                "forecaster history and horizon must be at least one slot".into(),
            ));
        }
        match kind {
            ForecastKind::SeasonalNaive { season: 0 } => {
                return Err(Error::InvalidConfig(
                    "season must be at least one slot".into(),
                ))
            }
            ForecastKind::ExponentialSmoothing { smoothing }
                if !(0.0..=1.0).contains(&smoothing) =>
            {
                return Err(Error::InvalidConfig("smoothing must lie in [0, 1]".into()))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            history_slots,
            horizon_slots,
        })
    }

    pub fn oracle(horizon_slots: usize) -> Self {
        Self {
            kind: ForecastKind::Oracle,
            history_slots: 1,
            horizon_slots,
        }
    }

    /// Repeats the current slot.
    pub fn persistence(horizon_slots: usize) -> Self {
        Self {
            kind: ForecastKind::SeasonalNaive { season: 1 },
            history_slots: 1,
            horizon_slots,
        }
    }

    /// Default season length covers one day.
    pub fn daily_season(slot_minutes: f64) -> usize {
        ((24.0 * 60.0 / slot_minutes).round() as usize).max(1)
    }

    /// Forecast slots `t + 1 ..= t + horizon_slots` from observations up to and including `t`.
    pub fn forecast(&self, demand: &DemandMatrix, t: usize) -> Result<Vec<Vec<f64>>> {
        self.forecast_n(demand, t, self.horizon_slots)
    }

    pub fn forecast_n(
        &self,
        demand: &DemandMatrix,
        t: usize,
        steps: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let observed = (t + 1).min(demand.slots());
        let need = |needed: usize| -> Result<()> {
            if observed < needed || t >= demand.slots() {
                Err(Error::InsufficientHistory {
                    slot: t,
                    needed,
                    available: observed,
                })
            } else {
                Ok(())
            }
        };
        let nodes = demand.nodes();
        let out = match self.kind {
            ForecastKind::HistoricalAverage => {
                need(self.history_slots)?;
                let mut mean = vec![0.0; nodes];
                for row in &demand.rows[t + 1 - self.history_slots..=t] {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut()
                    .for_each(|m| *m /= self.history_slots as f64);
                vec![mean; steps]
            }
            ForecastKind::SeasonalNaive { season } => {
                need(season)?;
                (1..=steps)
                    .map(|h| {
                        let back = season * h.div_ceil(season);
                        demand.rows[t + h - back].clone()
                    })
                    .collect()
            }
            ForecastKind::ExponentialSmoothing { smoothing } => {
                need(self.history_slots)?;
                let history = &demand.rows[t + 1 - self.history_slots..=t];
                let mut level = history[0].clone();
                for row in &history[1..] {
                    for (l, v) in level.iter_mut().zip(row) {
                        *l += smoothing * (v - *l);
                    }
                }
                vec![level; steps]
            }
            ForecastKind::Oracle => {
                if t + steps >= demand.slots() {
                    return Err(Error::InsufficientHistory {
                        slot: t,
                        needed: t + steps + 1,
                        available: demand.slots(),
                    });
                }
                demand.rows[t + 1..=t + steps].to_vec()
            }
        };
        Ok(out
            .into_iter()
            .map(|row| row.into_iter().map(|v| v.max(0.0)).collect())
            .collect())
    }

    /// Demand window for a decision taken at slot `t`: the observed row `t` followed by
    /// `len - 1` forecast rows.
    pub fn window(&self, demand: &DemandMatrix, t: usize, len: usize) -> Result<DemandMatrix> {
        if t >= demand.slots() {
            return Err(Error::InsufficientHistory {
                slot: t,
                needed: t + 1,
                available: demand.slots(),
            });
        }
        let mut rows = Vec::with_capacity(len);
        rows.push(demand.rows[t].clone());
        if len > 1 {
            rows.extend(self.forecast_n(demand, t, len - 1)?);
        }
        Ok(DemandMatrix {
            slot_minutes: demand.slot_minutes,
            rows,
        })
    }
}
