//! Search drivers over the move neighbourhood: greedy hill climbing and simulated annealing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{Env, EnvState};
use crate::actions::Action;
use crate::error::{Error, Result};
use crate::plan::ChargingPlan;
use crate::utility::UtilityBreakdown;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub plan: ChargingPlan,
    pub breakdown: UtilityBreakdown,
    pub evaluations: u64,
    /// `(evaluations, best utility so far)` each time the best improves.
    pub trace: Vec<(u64, f64)>,
}

struct Best {
    state: EnvState,
    trace: Vec<(u64, f64)>,
}

impl Best {
    fn new(state: &EnvState) -> Self {
        Self {
            state: state.clone(),
            trace: vec![(0, state.utility())],
        }
    }

    fn offer(&mut self, state: &EnvState, evaluations: u64) {
        if state.utility() > self.state.utility() {
            self.state = state.clone();
            self.trace.push((evaluations, state.utility()));
        }
    }

    fn finish(self, evaluations: u64) -> SearchResult {
        SearchResult {
            breakdown: self.state.eval.breakdown,
            plan: self.state.plan,
            evaluations,
            trace: self.trace,
        }
    }
}

/// Steepest ascent: scores every unmasked move, takes the best while it improves utility.
/// Stops after `max_evaluations` candidate scores or at the end of the episode.
pub fn hill_climb(env: &mut Env<'_>, max_evaluations: u64) -> Result<SearchResult> {
    env.reset();
    let start = env.evaluations();
    let mut best = Best::new(env.state());
    while !env.is_done() {
        let mut top: Option<(EnvState, f64)> = None;
        for action in env.state().valid_actions() {
            if env.evaluations() - start >= max_evaluations {
                break;
            }
            if let Some((next, reward)) = env.preview(action)? {
                if top.as_ref().is_none_or(|(_, r)| reward > *r) {
                    top = Some((next, reward));
                }
            }
        }
        match top {
            Some((next, reward)) if reward > 0.0 => {
                best.offer(&next, env.evaluations() - start);
                env.set_state(next);
            }
            _ => break,
        }
        if env.evaluations() - start >= max_evaluations {
            break;
        }
    }
    Ok(best.finish(env.evaluations() - start))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaConfig {
    pub evaluations: u64,
    /// Initial temperature in utility units.
    pub temp_start: f64,
    /// Final temperature; the schedule is geometric in the fraction of evaluations used.
    pub temp_end: f64,
    pub seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            evaluations: 10_000,
            temp_start: 0.05,
            temp_end: 1e-4,
            seed: 0,
        }
    }
}

impl SaConfig {
    fn temperature(&self, used: u64) -> f64 {
        if self.temp_start <= 0.0 {
            return 0.0;
        }
        let frac = used as f64 / self.evaluations.max(1) as f64;
        let end = self.temp_end.max(f64::MIN_POSITIVE);
        self.temp_start * (end / self.temp_start).powf(frac.min(1.0))
    }
}

/// Simulated annealing: a uniformly drawn unmasked move is accepted when it improves
/// utility, or with probability `exp(Δ / temperature)` otherwise. Episodes restart from the
/// initial plan once they hit the episode length or run out of moves. Returns the best plan
/// visited.
pub fn search_sa(env: &mut Env<'_>, cfg: &SaConfig) -> Result<SearchResult> {
    if cfg.evaluations == 0 {
        return Err(Error::InvalidConfig("annealing needs at least one evaluation".into()));
    }
    if !(cfg.temp_start >= 0.0) || !(cfg.temp_end >= 0.0) {
        return Err(Error::InvalidConfig("temperatures must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    env.reset();
    let start = env.evaluations();
    let mut best = Best::new(env.state());
    let mut stalled_restarts = 0;
    while env.evaluations() - start < cfg.evaluations {
        if env.is_done() {
            if env.state().valid_actions().is_empty() && env.state().step == 0 {
                // the initial plan admits no move at all
                break;
            }
            env.reset();
            stalled_restarts += 1;
            if stalled_restarts > cfg.evaluations {
                break;
            }
            continue;
        }
        let valid = env.state().valid_actions();
        let action: Action = valid[rng.gen_range(0..valid.len())];
        let Some((next, delta)) = env.preview(action)? else {
            continue;
        };
        best.offer(&next, env.evaluations() - start);
        let temp = cfg.temperature(env.evaluations() - start);
        let accept = delta >= 0.0 || (temp > 0.0 && rng.gen::<f64>() < (delta / temp).exp());
        if accept {
            env.set_state(next);
        } else {
            let mut stay = env.state().clone();
            stay.step += 1;
            env.set_state(stay);
        }
    }
    Ok(best.finish(env.evaluations() - start))
}
