//! Value-based learner over the five moves: a two-hidden-layer network (or a table for tiny
//! instances) trained from replayed transitions against a periodically synced target.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, VecDeque};
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::env::{observation_len, Env};
use crate::actions::Action;
use crate::error::{Error, Result};
use crate::plan::ChargingPlan;
use crate::utility::UtilityBreakdown;

const ACTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approximator {
    Network,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub approximator: Approximator,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub max_steps: usize,
    pub hidden: usize,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps between target-network copies.
    pub target_sync: usize,
    /// Steps between gradient updates.
    pub train_every: usize,
    /// Abort once any action value exceeds this magnitude.
    pub max_abs_value: f64,
    /// Episodes averaged per training-curve point.
    pub curve_window: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            approximator: Approximator::Network,
            learning_rate: 0.01,
            replay_capacity: 10_000,
            batch_size: 128,
            max_steps: 30_000,
            hidden: 64,
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            target_sync: 200,
            train_every: 1,
            max_abs_value: 1e6,
            curve_window: 10,
        }
    }
}

impl LearnerConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.replay_capacity > 0
            && self.batch_size > 0
            && self.hidden > 0
            && (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.epsilon_start)
            && (0.0..=1.0).contains(&self.epsilon_end)
            && self.target_sync > 0
            && self.train_every > 0
            && self.max_abs_value > 0.0
            && self.curve_window > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("invalid learner configuration".into()))
        }
    }

    fn epsilon(&self, step: usize) -> f64 {
        let frac = if self.max_steps == 0 {
            1.0
        } else {
            (step as f64 / self.max_steps as f64).min(1.0)
        };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub episode: usize,
    pub mean_episode_reward: f64,
}

/// Greedy policy produced by training.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Nothing learned; picks uniformly among unmasked moves.
    Uniform,
    Network(Box<Mlp>, ObsScale),
    Table(HashMap<u64, [f64; ACTIONS]>),
}

impl Policy {
    /// Best unmasked move for the environment's current state (`None` if all are masked).
    pub fn act(&self, env: &Env<'_>, rng: &mut impl Rng) -> Option<Action> {
        let valid = env.state().valid_actions();
        if valid.is_empty() {
            return None;
        }
        let values = match self {
            Policy::Uniform => return valid.choose(rng).copied(),
            Policy::Network(net, scale) => net.forward(&scale.apply(&env.observe())),
            Policy::Table(table) => table
                .get(&plan_key(&env.state().plan))
                .copied()
                .unwrap_or([0.0; ACTIONS]),
        };
        greedy(&values, &valid)
    }
}

#[derive(Debug, Clone)]
pub struct LearnerResult {
    pub policy: Policy,
    pub best_plan: ChargingPlan,
    pub best_breakdown: UtilityBreakdown,
    pub curve: Vec<CurvePoint>,
    pub episodes: usize,
}

fn greedy(values: &[f64; ACTIONS], valid: &[Action]) -> Option<Action> {
    let mut best: Option<(Action, f64)> = None;
    for &a in valid {
        let v = values[a.index()];
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
}

fn plan_key(plan: &ChargingPlan) -> u64 {
    let mut h = DefaultHasher::new();
    for s in &plan.stations {
        s.node.hash(&mut h);
        s.chargers.hash(&mut h);
        s.temporary.hash(&mut h);
    }
    for m in &plan.mcs {
        m.targets.hash(&mut h);
    }
    h.finish()
}

/// Per-feature divisor keeping observation entries near unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsScale {
    offset: Vec<f64>,
    scale: Vec<f64>,
}

impl ObsScale {
    fn new(env: &Env<'_>) -> Self {
        let cfg = env.config();
        let net = env.net();
        let t = cfg.horizon_slots;
        let kinds = cfg.charger_kinds();
        let range = |f: fn(&crate::network::Node) -> f64| {
            let lo = net.nodes().iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = net.nodes().iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            (lo, (hi - lo).max(1e-9))
        };
        let (lon0, lon_s) = range(|n| n.lon);
        let (lat0, lat_s) = range(|n| n.lat);
        let dem_s = env
            .window()
            .rows()
            .iter()
            .flatten()
            .fold(0.0_f64, |a, &b| a.max(b))
            .max(1e-9);
        let k = f64::from(cfg.max_chargers.max(1));
        let mut offset = Vec::with_capacity(observation_len(net.len(), cfg));
        let mut scale = Vec::with_capacity(offset.capacity());
        for _ in 0..net.len() {
            offset.extend([lon0, lat0]);
            scale.extend([lon_s, lat_s]);
            offset.extend(std::iter::repeat_n(0.0, t + kinds));
            scale.extend(std::iter::repeat_n(dem_s, t));
            scale.extend(std::iter::repeat_n(k, kinds));
        }
        for _ in 0..cfg.mc_count {
            offset.extend(std::iter::repeat_n(0.0, 3 * t));
            scale.extend(std::iter::repeat_n(net.len().max(1) as f64, t));
            scale.extend(std::iter::repeat_n(cfg.fleet_battery_kwh(), t));
            scale.extend(std::iter::repeat_n(t as f64 * cfg.slot_minutes, t));
        }
        Self { offset, scale }
    }

    fn apply(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(x, (o, s))| (x - o) / s)
            .collect()
    }
}

/// Fully connected ReLU network with two hidden layers and a linear head.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
}

#[derive(Debug, Clone)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / (inputs + outputs) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite standard deviation");
        Self {
            inputs,
            outputs,
            w: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
            b: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>());
        }
    }
}

impl Mlp {
    fn new(inputs: usize, hidden: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Self {
            layers: vec![
                Dense::new(inputs, hidden, rng),
                Dense::new(hidden, hidden, rng),
                Dense::new(hidden, outputs, rng),
            ],
        }
    }

    fn params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Activations of every layer (input first, output last).
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.forward(acts.last().expect("input present"), &mut out);
            if i + 1 < self.layers.len() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> [f64; ACTIONS] {
        let out = self.trace(x).pop().expect("output present");
        std::array::from_fn(|i| out[i])
    }

    /// Adds to `grad` (flattened like `params`) the gradient of `0.5 * err²` on output
    /// `action`, where `err` is clipped Huber-style to `[-1, 1]`.
    fn accumulate(&self, x: &[f64], action: usize, target: f64, grad: &mut [f64]) -> f64 {
        let acts = self.trace(x);
        let out = acts.last().expect("output present");
        let err = out[action] - target;
        let mut delta = vec![0.0; out.len()];
        delta[action] = err.clamp(-1.0, 1.0);
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.w.len() + l.b.len();
        }
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &acts[li];
            let base = offsets[li];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * layer.inputs..base + (o + 1) * layer.inputs];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
                grad[base + layer.w.len() + o] += d;
            }
            if li > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate().take(layer.outputs) {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.w[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        err
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Mlp, grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (i, p) in net.params_mut().enumerate() {
            let g = grad[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            *p -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

struct Transition {
    obs: Vec<f64>,
    key: u64,
    action: usize,
    reward: f64,
    next_obs: Vec<f64>,
    next_key: u64,
    next_mask: [bool; 5],
    terminal: bool,
}

fn max_valid(values: &[f64; ACTIONS], mask: &[bool; 5]) -> f64 {
    values
        .iter()
        .zip(mask)
        .filter(|(_, &ok)| ok)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Trains for `cfg.max_steps` environment steps from the environment's initial plan and
/// returns the greedy policy and the best plan seen. Deterministic given `seed`.
pub fn train_learner(env: &mut Env<'_>, cfg: &LearnerConfig, seed: u64) -> Result<LearnerResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    env.reset();
    let mut best = env.state().clone();
    if cfg.max_steps == 0 {
        return Ok(LearnerResult {
            policy: Policy::Uniform,
            best_breakdown: best.eval.breakdown,
            best_plan: best.plan,
            curve: Vec::new(),
            episodes: 0,
        });
    }

    let tabular = cfg.approximator == Approximator::Table;
    let scale = ObsScale::new(env);
    let inputs = observation_len(env.net().len(), env.config());
    let mut online = Mlp::new(inputs, cfg.hidden, ACTIONS, &mut rng);
    let mut target = online.clone();
    let mut adam = Adam::new(online.params(), cfg.learning_rate);
    let mut table: HashMap<u64, [f64; ACTIONS]> = HashMap::new();
    let mut replay: VecDeque<Transition> = VecDeque::with_capacity(cfg.replay_capacity);

    let mut curve = Vec::new();
    let mut recent: VecDeque<f64> = VecDeque::new();
    let mut episode_reward = 0.0;
    let mut episodes = 0;

    let observe = |env: &Env<'_>| {
        if tabular {
            Vec::new()
        } else {
            scale.apply(&env.observe())
        }
    };
    let mut obs = observe(env);
    for step in 0..cfg.max_steps {
        let key = plan_key(&env.state().plan);
        let valid = env.state().valid_actions();
        let action = if valid.is_empty() {
            None
        } else if rng.gen::<f64>() < cfg.epsilon(step) {
            valid.choose(&mut rng).copied()
        } else {
            let values = if tabular {
                table.get(&key).copied().unwrap_or([0.0; ACTIONS])
            } else {
                let q = online.forward(&obs);
                guard(&q, cfg, step)?;
                q
            };
            greedy(&values, &valid)
        };
        let Some(action) = action else {
            // nothing is possible from here: close the episode
            finish_episode(&mut recent, &mut curve, &mut episodes, episode_reward, step, cfg);
            episode_reward = 0.0;
            env.reset();
            obs = observe(env);
            continue;
        };
        let outcome = env.step(action)?;
        episode_reward += outcome.reward;
        if env.state().utility() > best.utility() {
            best = env.state().clone();
        }
        let next_obs = observe(env);
        let transition = Transition {
            obs: std::mem::take(&mut obs),
            key,
            action: action.index(),
            reward: outcome.reward,
            next_obs: next_obs.clone(),
            next_key: plan_key(&env.state().plan),
            next_mask: env.state().mask(),
            terminal: outcome.done,
        };
        if tabular {
            let next_best = if transition.terminal {
                0.0
            } else {
                let next = table.get(&transition.next_key).copied().unwrap_or([0.0; ACTIONS]);
                let m = max_valid(&next, &transition.next_mask);
                if m.is_finite() { m } else { 0.0 }
            };
            let entry = table.entry(transition.key).or_insert([0.0; ACTIONS]);
            let q = &mut entry[transition.action];
            *q += cfg.learning_rate * (transition.reward + cfg.gamma * next_best - *q);
            if !q.is_finite() || q.abs() > cfg.max_abs_value {
                return Err(Error::Diverged {
                    value: *q,
                    limit: cfg.max_abs_value,
                    step,
                });
            }
        } else {
            if replay.len() == cfg.replay_capacity {
                replay.pop_front();
            }
            replay.push_back(transition);
            if replay.len() >= cfg.batch_size && step % cfg.train_every == 0 {
                train_batch(&mut online, &target, &mut adam, &replay, cfg, &mut rng);
            }
            if (step + 1) % cfg.target_sync == 0 {
                target = online.clone();
            }
        }
        obs = next_obs;
        if outcome.done {
            finish_episode(&mut recent, &mut curve, &mut episodes, episode_reward, step + 1, cfg);
            episode_reward = 0.0;
            env.reset();
            obs = observe(env);
        }
    }
    if env.state().step > 0 {
        finish_episode(&mut recent, &mut curve, &mut episodes, episode_reward, cfg.max_steps, cfg);
    }
    let policy = if tabular {
        Policy::Table(table)
    } else {
        Policy::Network(Box::new(online), scale)
    };
    Ok(LearnerResult {
        policy,
        best_breakdown: best.eval.breakdown,
        best_plan: best.plan,
        curve,
        episodes,
    })
}

fn guard(q: &[f64; ACTIONS], cfg: &LearnerConfig, step: usize) -> Result<()> {
    for &v in q {
        if !v.is_finite() || v.abs() > cfg.max_abs_value {
            return Err(Error::Diverged {
                value: v,
                limit: cfg.max_abs_value,
                step,
            });
        }
    }
    Ok(())
}

fn finish_episode(
    recent: &mut VecDeque<f64>,
    curve: &mut Vec<CurvePoint>,
    episodes: &mut usize,
    reward: f64,
    step: usize,
    cfg: &LearnerConfig,
) {
    *episodes += 1;
    recent.push_back(reward);
    if recent.len() > cfg.curve_window {
        recent.pop_front();
    }
    curve.push(CurvePoint {
        step,
        episode: *episodes,
        mean_episode_reward: recent.iter().sum::<f64>() / recent.len() as f64,
    });
}

fn train_batch(
    online: &mut Mlp,
    target: &Mlp,
    adam: &mut Adam,
    replay: &VecDeque<Transition>,
    cfg: &LearnerConfig,
    rng: &mut impl Rng,
) {
    let mut grad = vec![0.0; online.params()];
    for _ in 0..cfg.batch_size {
        let tr = &replay[rng.gen_range(0..replay.len())];
        let bootstrap = if tr.terminal {
            0.0
        } else {
            let m = max_valid(&target.forward(&tr.next_obs), &tr.next_mask);
            if m.is_finite() {
                m
            } else {
                0.0
            }
        };
        let y = tr.reward + cfg.gamma * bootstrap;
        online.accumulate(&tr.obs, tr.action, y, &mut grad);
    }
    let n = cfg.batch_size as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    adam.step(online, &grad);
}
