//! Planning environment: plan state, the five moves, fleet scheduling after each move, and
//! reward as the change in utility.

use serde::{Deserialize, Serialize};

use crate::actions::{apply_action, Action, ActionContext};
use crate::config::ScenarioConfig;
use crate::demand::DemandMatrix;
use crate::error::Result;
use crate::mcs;
use crate::network::RoadNetwork;
use crate::plan::{ChargingPlan, ConfigTable};
use crate::utility::{self, Evaluation, UtilityBreakdown};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Steps per episode.
    pub episode_len: usize,
    /// Support overloaded stations with idle fleets after every move.
    pub mcs1: bool,
    /// Open flexible charging areas with idle fleets after every move.
    pub mcs2: bool,
    /// Repeat both heuristics until no fleet is dispatched (instead of once per slot).
    pub repeat_scheduling: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_len: 100,
            mcs1: true,
            mcs2: true,
            repeat_scheduling: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub plan: ChargingPlan,
    pub eval: Evaluation,
    pub step: usize,
    /// Result of each move on `plan` before fleet scheduling; `None` when masked.
    successors: [Option<ChargingPlan>; 5],
}

impl EnvState {
    pub fn breakdown(&self) -> &UtilityBreakdown {
        &self.eval.breakdown
    }

    pub fn utility(&self) -> f64 {
        self.eval.breakdown.utility
    }

    pub fn is_valid(&self, action: Action) -> bool {
        self.successors[action.index()].is_some()
    }

    pub fn valid_actions(&self) -> Vec<Action> {
        Action::ALL
            .into_iter()
            .filter(|&a| self.is_valid(a))
            .collect()
    }

    pub fn mask(&self) -> [bool; 5] {
        std::array::from_fn(|i| self.successors[i].is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub masked: bool,
    pub done: bool,
}

pub struct Env<'a> {
    net: &'a RoadNetwork,
    window: DemandMatrix,
    cfg: ScenarioConfig,
    table: ConfigTable,
    opts: EnvConfig,
    initial: EnvState,
    state: EnvState,
    evaluations: u64,
}

impl<'a> Env<'a> {
    /// `cfg` should already carry the utility normalizers. `window` must span the horizon.
    pub fn new(
        net: &'a RoadNetwork,
        window: DemandMatrix,
        cfg: ScenarioConfig,
        initial: ChargingPlan,
        opts: EnvConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let table = ConfigTable::new(&cfg);
        let mut plan = initial;
        plan.refresh(net, &cfg)?;
        plan.validate(net, &cfg)?;
        let eval = utility::evaluate(&plan, net, &window, &cfg)?;
        let ctx = ActionContext {
            net,
            window: &window,
            cfg: &cfg,
            table: &table,
        };
        let initial = build_state(plan, eval, 0, &ctx)?;
        Ok(Self {
            net,
            window,
            cfg,
            table,
            opts,
            state: initial.clone(),
            initial,
            evaluations: 0,
        })
    }

    fn make_state(&self, plan: ChargingPlan, eval: Evaluation, step: usize) -> Result<EnvState> {
        build_state(plan, eval, step, &self.context())
    }

    fn context(&self) -> ActionContext<'_> {
        ActionContext {
            net: self.net,
            window: &self.window,
            cfg: &self.cfg,
            table: &self.table,
        }
    }

    pub fn net(&self) -> &RoadNetwork {
        self.net
    }

    pub fn window(&self) -> &DemandMatrix {
        &self.window
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn options(&self) -> &EnvConfig {
        &self.opts
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn initial(&self) -> &EnvState {
        &self.initial
    }

    /// Utility evaluations of candidate plans so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.opts.episode_len || self.state.successors.iter().all(Option::is_none)
    }

    pub fn reset(&mut self) {
        self.state = self.initial.clone();
    }

    pub fn set_state(&mut self, state: EnvState) {
        self.state = state;
    }

    /// Successor state and reward of `action` without committing it. `None` when masked.
    pub fn preview(&mut self, action: Action) -> Result<Option<(EnvState, f64)>> {
        let Some(moved) = self.state.successors[action.index()].clone() else {
            return Ok(None);
        };
        let plan = self.schedule(moved)?;
        let eval = utility::evaluate(&plan, self.net, &self.window, &self.cfg)?;
        self.evaluations += 1;
        let reward = eval.breakdown.utility - self.state.utility();
        let next = self.make_state(plan, eval, self.state.step + 1)?;
        Ok(Some((next, reward)))
    }

    /// Applies `action`. A masked action leaves the plan unchanged with reward 0 but still
    /// uses up a step.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        match self.preview(action)? {
            Some((next, reward)) => {
                self.state = next;
                Ok(StepOutcome {
                    reward,
                    masked: false,
                    done: self.is_done(),
                })
            }
            None => {
                self.state.step += 1;
                Ok(StepOutcome {
                    reward: 0.0,
                    masked: true,
                    done: self.is_done(),
                })
            }
        }
    }

    /// Runs the two fleet heuristics for every slot of the window.
    fn schedule(&self, plan: ChargingPlan) -> Result<ChargingPlan> {
        schedule_fleets(
            plan,
            self.net,
            &self.window,
            &self.cfg,
            self.opts.mcs1,
            self.opts.mcs2,
            self.opts.repeat_scheduling,
        )
    }

    /// Flattened observation of the current state.
    pub fn observe(&self) -> Vec<f64> {
        observe(&self.state.plan, self.net, &self.window, &self.cfg)
    }
}

fn build_state(
    plan: ChargingPlan,
    eval: Evaluation,
    step: usize,
    ctx: &ActionContext<'_>,
) -> Result<EnvState> {
    let mut successors: [Option<ChargingPlan>; 5] = Default::default();
    for action in Action::ALL {
        successors[action.index()] = apply_action(&plan, &eval, action, ctx)?;
    }
    Ok(EnvState {
        plan,
        eval,
        step,
        successors,
    })
}

/// Support stations (if `mcs1`) then open flexible areas (if `mcs2`) in every slot of
/// `window`, once each or until nothing more is dispatched when `repeat` is set.
pub fn schedule_fleets(
    mut plan: ChargingPlan,
    net: &RoadNetwork,
    window: &DemandMatrix,
    cfg: &ScenarioConfig,
    mcs1: bool,
    mcs2: bool,
    repeat: bool,
) -> Result<ChargingPlan> {
    if plan.mcs.is_empty() {
        return Ok(plan);
    }
    for slot in 0..window.slots() {
        loop {
            let mut dispatched = false;
            if mcs1 {
                let (next, mc) = mcs::support_stations(&plan, net, window, slot, cfg)?;
                plan = next;
                dispatched |= mc.is_some();
            }
            if mcs2 {
                let (next, mc) = mcs::establish_flex_areas(&plan, net, window, slot, cfg)?;
                plan = next;
                dispatched |= mc.is_some();
            }
            if !repeat || !dispatched {
                break;
            }
        }
    }
    Ok(plan)
}

/// Observation length `|V| (2 + |T| + n) + |M| 3|T|`.
pub fn observation_len(nodes: usize, cfg: &ScenarioConfig) -> usize {
    let t = cfg.horizon_slots;
    nodes * (2 + t + cfg.charger_kinds()) + cfg.mc_count * 3 * t
}

/// Per node (in id order): lon, lat, demand per window slot, charger counts. Per fleet (in
/// id order): location index per slot, energy per slot, accessible time per slot.
pub fn observe(
    plan: &ChargingPlan,
    net: &RoadNetwork,
    window: &DemandMatrix,
    cfg: &ScenarioConfig,
) -> Vec<f64> {
    let t = cfg.horizon_slots;
    let kinds = cfg.charger_kinds();
    let mut out = Vec::with_capacity(observation_len(net.len(), cfg));
    for (v, node) in net.nodes().iter().enumerate() {
        out.push(node.lon);
        out.push(node.lat);
        for slot in 0..t {
            out.push(if slot < window.slots() {
                window.get(slot, v)
            } else {
                0.0
            });
        }
        match plan.station_at(node.id) {
            Some(s) => out.extend(s.chargers.iter().map(|&x| f64::from(x))),
            None => out.extend(std::iter::repeat_n(0.0, kinds)),
        }
    }
    for m in 0..cfg.mc_count {
        let traj = plan.mcs.get(m).map(|mc| mc.trajectory.as_slice()).unwrap_or(&[]);
        let field = |f: &dyn Fn(&crate::plan::McSlot) -> f64| -> Vec<f64> {
            (0..t).map(|slot| traj.get(slot).map_or(0.0, f)).collect()
        };
        out.extend(field(&|s| net.index_of(s.location).map_or(0.0, |i| i as f64)));
        out.extend(field(&|s| s.energy_kwh));
        out.extend(field(&|s| s.accessible_min));
    }
    out
}
