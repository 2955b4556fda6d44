//! Command-line front end: scenario generation, planning drivers, evaluation against the
//! existing plan, rolling-horizon operation, the queue oracle, report merging and sweeps.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use chargeplan::baseline::highest_demand_baseline;
use chargeplan::demand::{DemandMatrix, ForecastKind, Forecaster};
use chargeplan::io::{self, ScenarioFile, ENV_PREFIX};
use chargeplan::optimizer::{
    hill_climb, operate_mpc, search_sa, train_learner, Env, EnvConfig, LearnerConfig,
    OperateOptions, SaConfig,
};
use chargeplan::oracle::simulate_md1;
use chargeplan::plan::{budget_used, ChargingPlan};
use chargeplan::report::{self, ApproachMetrics, MetricsReport, RunMeta};
use chargeplan::scenario::{generate_scenario, normalize_config, GeneratorConfig, Scenario};
use chargeplan::utility::{self, md1_wait};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Name under which the scenario's own plan appears in reports.
pub const REFERENCE_NAME: &str = "existing-plan";

#[derive(Debug, Parser)]
#[command(name = "chargeplan", version, about = "Plan and operate fixed and mobile EV charging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario file.
    Gen(GenArgs),
    /// Build a charging plan with one of the drivers.
    Plan(PlanArgs),
    /// Score plan files against the scenario's existing plan.
    Evaluate(EvaluateArgs),
    /// Operate a plan slot by slot, dispatching the mobile fleets.
    Operate(OperateArgs),
    /// Compare the M/D/1 waiting-time formula with simulation (CSV).
    Simulate(SimulateArgs),
    /// Merge metrics files into one comparison table (CSV).
    Report(ReportArgs),
    /// Re-plan across values of one configuration field (CSV).
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Driver {
    /// Steepest-ascent hill climbing over the action set.
    Greedy,
    /// Simulated annealing over the action set.
    Sa,
    /// Value-learning agent.
    Learner,
    /// Stations at the nodes with the largest total demand until the budget runs out.
    HighestDemand,
}

impl Driver {
    fn name(self) -> &'static str {
        match self {
            Driver::Greedy => "greedy",
            Driver::Sa => "sa",
            Driver::Learner => "learner",
            Driver::HighestDemand => "highest-demand",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ForecasterChoice {
    Oracle,
    SeasonalNaive,
    HistoricalAverage,
    ExpSmoothing,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generator settings as JSON; `--nodes` and `--slots` take precedence.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub slots: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fleet heuristic switches shared by `plan` and `operate`.
#[derive(Debug, Args, Clone, Copy)]
pub struct FleetFlags {
    /// Disable support of overloaded stations.
    #[arg(long)]
    pub no_mcs1: bool,
    /// Disable flexible charging areas.
    #[arg(long)]
    pub no_mcs2: bool,
    /// Repeat both heuristics until no fleet is dispatched.
    #[arg(long)]
    pub repeat_scheduling: bool,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "sa")]
    pub driver: Driver,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluations for greedy and sa, training steps for learner.
    #[arg(long)]
    pub budget_evals: Option<u64>,
    /// First demand slot of the planning window.
    #[arg(long, default_value_t = 0)]
    pub start_slot: usize,
    /// Learner hyperparameters as JSON.
    #[arg(long)]
    pub learner_config: Option<PathBuf>,
    /// Training curve (learner) or best-utility trace (greedy, sa) as CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[command(flatten)]
    pub fleet: FleetFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Plan files to score (repeatable). Without any, the existing plan is scored alone.
    #[arg(long)]
    pub plan: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub start_slot: usize,
    /// Recorded in the report metadata.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OperateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub start_slot: usize,
    /// Slots to operate; defaults to every remaining slot with a full look-ahead.
    #[arg(long)]
    pub slots: Option<usize>,
    #[arg(long, value_enum, default_value = "oracle")]
    pub forecaster: ForecasterChoice,
    /// History slots for the statistical forecasters.
    #[arg(long)]
    pub history: Option<usize>,
    /// Season length for the seasonal forecaster; defaults to one day.
    #[arg(long)]
    pub season: Option<usize>,
    #[arg(long, default_value_t = 0.3)]
    pub smoothing: f64,
    /// Replace the forecaster with persistence of the current slot.
    #[arg(long)]
    pub no_mpc: bool,
    #[command(flatten)]
    pub fleet: FleetFlags,
    /// Approach name in the metrics report.
    #[arg(long)]
    pub name: Option<String>,
    /// Fleet events as CSV.
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Utilizations to simulate, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.3, 0.5, 0.7])]
    pub rho: Vec<f64>,
    /// Service rate in EV per hour.
    #[arg(long, default_value_t = 2.2571)]
    pub mu: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub arrivals: u64,
    /// Turn away arrivals whose expected wait exceeds this many hours.
    #[arg(long)]
    pub w_max_h: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics files written by `evaluate` or `operate`.
    #[arg(required = true)]
    pub metrics: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// `K` or any configuration field name, e.g. `budget_cny`.
    #[arg(long)]
    pub param: String,
    /// `a..b` (inclusive), `a..b:step`, or a comma-separated list.
    #[arg(long)]
    pub values: String,
    #[arg(long, value_enum, default_value = "sa")]
    pub driver: Driver,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub budget_evals: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub start_slot: usize,
    #[arg(long)]
    pub learner_config: Option<PathBuf>,
    #[command(flatten)]
    pub fleet: FleetFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the exit code:
/// 0 on success, 1 for runtime failures, 2 for usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Plan(a) => plan(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Operate(a) => operate(a),
        Command::Simulate(a) => simulate(a),
        Command::Report(a) => report_cmd(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Writes `text` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn env_overrides() -> Vec<(String, String)> {
    std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect()
}

/// Scenario file with environment overrides applied to its configuration, then validated.
fn load_scenario_file(path: &Path) -> Result<ScenarioFile> {
    let text = read(path)?;
    let mut file: ScenarioFile = serde_json::from_str(&text)
        .with_context(|| format!("malformed scenario file {}", path.display()))?;
    file.config = io::apply_overrides(&file.config, env_overrides())
        .context("invalid configuration override")?;
    Ok(file)
}

fn into_scenario(file: ScenarioFile, path: &Path) -> Result<Scenario> {
    file.into_scenario()
        .with_context(|| format!("infeasible scenario {}", path.display()))
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    into_scenario(load_scenario_file(path)?, path)
}

fn load_plan(path: &Path, scenario: &Scenario) -> Result<ChargingPlan> {
    let text = read(path)?;
    io::plan_from_json(&text, scenario)
        .with_context(|| format!("malformed or infeasible plan file {}", path.display()))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    serde_json::from_str(&read(path)?)
        .with_context(|| format!("malformed {what} file {}", path.display()))
}

fn planning_window(s: &Scenario, start: usize) -> Result<DemandMatrix> {
    s.demand
        .window(start, s.config.horizon_slots)
        .with_context(|| format!("no full planning window at slot {start}"))
}

fn gen(a: GenArgs) -> Result<()> {
    let mut g: GeneratorConfig = match &a.generator {
        Some(p) => load_json(p, "generator")?,
        None => GeneratorConfig::default(),
    };
    if let Some(n) = a.nodes {
        g.nodes = n;
    }
    if let Some(t) = a.slots {
        g.slots = t;
    }
    g.model = io::apply_overrides(&g.model, env_overrides())
        .context("invalid configuration override")?;
    let s = generate_scenario(&g, a.seed).context("cannot generate scenario")?;
    emit(a.out.as_deref(), &io::scenario_to_json(&s)?)
}

fn env_config(fleet: FleetFlags) -> EnvConfig {
    EnvConfig {
        mcs1: !fleet.no_mcs1,
        mcs2: !fleet.no_mcs2,
        repeat_scheduling: fleet.repeat_scheduling,
        ..Default::default()
    }
}

struct Planned {
    plan: ChargingPlan,
    /// Header and rows of the curve CSV.
    curve: (Vec<&'static str>, Vec<Vec<String>>),
    evaluations: u64,
}

struct PlanRequest<'a> {
    driver: Driver,
    seed: u64,
    budget_evals: Option<u64>,
    start_slot: usize,
    learner: &'a LearnerConfig,
    fleet: FleetFlags,
}

/// Runs the requested driver on the window at `req.start_slot`, with cost and loss scaled by
/// `reference`.
fn run_driver(
    s: &Scenario,
    reference: Option<&ChargingPlan>,
    req: &PlanRequest<'_>,
) -> Result<Planned> {
    let window = planning_window(s, req.start_slot)?;
    let cfg = normalize_config(&s.config, reference, &s.network, &window)?;
    if req.driver == Driver::HighestDemand {
        let plan = highest_demand_baseline(&s.network, &window, &cfg, s.depots.clone())?;
        return Ok(Planned {
            plan,
            curve: (vec!["step", "best_utility"], Vec::new()),
            evaluations: 0,
        });
    }
    let mut env = Env::new(&s.network, window, cfg, s.empty_plan()?, env_config(req.fleet))?;
    let evals = req.budget_evals.unwrap_or(10_000);
    let trace_rows = |trace: &[(u64, f64)]| {
        trace
            .iter()
            .map(|(e, u)| vec![e.to_string(), u.to_string()])
            .collect()
    };
    Ok(match req.driver {
        Driver::Greedy => {
            let r = hill_climb(&mut env, evals)?;
            Planned {
                curve: (vec!["step", "best_utility"], trace_rows(&r.trace)),
                plan: r.plan,
                evaluations: r.evaluations,
            }
        }
        Driver::Sa => {
            let r = search_sa(
                &mut env,
                &SaConfig {
                    evaluations: evals,
                    seed: req.seed,
                    ..Default::default()
                },
            )?;
            Planned {
                curve: (vec!["step", "best_utility"], trace_rows(&r.trace)),
                plan: r.plan,
                evaluations: r.evaluations,
            }
        }
        Driver::Learner => {
            let mut lc = *req.learner;
            if let Some(steps) = req.budget_evals {
                lc.max_steps = usize::try_from(steps).context("--budget-evals is too large")?;
            }
            let r = train_learner(&mut env, &lc, req.seed)?;
            let rows = r
                .curve
                .iter()
                .map(|p| {
                    vec![
                        p.step.to_string(),
                        p.episode.to_string(),
                        p.mean_episode_reward.to_string(),
                    ]
                })
                .collect();
            Planned {
                plan: r.best_plan,
                curve: (vec!["step", "episode", "mean_episode_reward"], rows),
                evaluations: env.evaluations(),
            }
        }
        Driver::HighestDemand => unreachable!("handled above"),
    })
}

fn learner_config(path: Option<&Path>) -> Result<LearnerConfig> {
    match path {
        Some(p) => load_json(p, "learner configuration"),
        None => Ok(LearnerConfig::default()),
    }
}

fn plan(a: PlanArgs) -> Result<()> {
    let s = load_scenario(&a.scenario)?;
    let learner = learner_config(a.learner_config.as_deref())?;
    let started = Instant::now();
    let planned = run_driver(
        &s,
        s.reference_plan.as_ref(),
        &PlanRequest {
            driver: a.driver,
            seed: a.seed,
            budget_evals: a.budget_evals,
            start_slot: a.start_slot,
            learner: &learner,
            fleet: a.fleet,
        },
    )?;
    let window = planning_window(&s, a.start_slot)?;
    let cfg = s.normalized_config(&window)?;
    let score = utility::evaluate(&planned.plan, &s.network, &window, &cfg)?;
    if let Some(p) = &a.curve {
        let (header, rows) = &planned.curve;
        emit(Some(p), &csv_text(header, rows)?)?;
    }
    emit(a.out.as_deref(), &io::plan_to_json(&planned.plan)?)?;
    eprintln!(
        "{}: utility {:.6}, {} stations, {} CNY of {} CNY, {} evaluations, {:.2} s",
        a.driver.name(),
        score.breakdown.utility,
        planned.plan.stations.len(),
        budget_used(&planned.plan, &cfg),
        cfg.budget_cny,
        planned.evaluations,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// Scores `plans` on the planning window at `start`. The existing plan, when there is one,
/// comes first and serves as the 100% reference.
fn evaluation_report(
    s: &Scenario,
    existing: Option<&ChargingPlan>,
    plans: &[(String, ChargingPlan)],
    start: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let started = Instant::now();
    let window = planning_window(s, start)?;
    let cfg = normalize_config(&s.config, existing, &s.network, &window)?;
    let reference = match existing {
        Some(p) => Some(utility::evaluate(p, &s.network, &window, &cfg)?),
        None => None,
    };
    let ref_breakdown = reference.as_ref().map(|e| e.breakdown);
    let mut approaches: Vec<ApproachMetrics> = Vec::new();
    if let (Some(e), Some(p)) = (&reference, existing) {
        approaches.push(report::approach(
            REFERENCE_NAME,
            e.breakdown,
            e.slots.clone(),
            budget_used(p, &cfg),
            ref_breakdown.as_ref(),
        ));
    }
    for (name, plan) in plans {
        let e = utility::evaluate(plan, &s.network, &window, &cfg)?;
        approaches.push(report::approach(
            name,
            e.breakdown,
            e.slots,
            budget_used(plan, &cfg),
            ref_breakdown.as_ref(),
        ));
    }
    Ok(MetricsReport {
        reference: ref_breakdown,
        approaches,
        meta: RunMeta {
            seed,
            config_hash: report::config_hash(&s.config)?,
            start_slot: start,
            runtime_s: started.elapsed().as_secs_f64(),
        },
    })
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let s = load_scenario(&a.scenario)?;
    if a.plan.is_empty() && s.reference_plan.is_none() {
        bail!("nothing to evaluate: no --plan given and the scenario has no existing plan");
    }
    let plans = a
        .plan
        .iter()
        .map(|p| Ok((file_stem(p), load_plan(p, &s)?)))
        .collect::<Result<Vec<_>>>()?;
    let r = evaluation_report(&s, s.reference_plan.as_ref(), &plans, a.start_slot, a.seed)?;
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&r)? + "\n"))
}

fn forecaster(a: &OperateArgs, s: &Scenario) -> Result<Forecaster> {
    let h = s.config.horizon_slots;
    if a.no_mpc {
        return Ok(Forecaster::persistence(h));
    }
    let season = a
        .season
        .unwrap_or_else(|| Forecaster::daily_season(s.config.slot_minutes));
    let history = a.history.unwrap_or(season);
    let kind = match a.forecaster {
        ForecasterChoice::Oracle => return Ok(Forecaster::oracle(h)),
        ForecasterChoice::SeasonalNaive => ForecastKind::SeasonalNaive { season },
        ForecasterChoice::HistoricalAverage => ForecastKind::HistoricalAverage,
        ForecasterChoice::ExpSmoothing => ForecastKind::ExponentialSmoothing {
            smoothing: a.smoothing,
        },
    };
    Forecaster::new(kind, history, h).context("invalid forecaster settings")
}

fn operate(a: OperateArgs) -> Result<()> {
    let started = Instant::now();
    let s = load_scenario(&a.scenario)?;
    let plan = load_plan(&a.plan, &s)?;
    let f = forecaster(&a, &s)?;
    let available = s.demand.slots().saturating_sub(a.start_slot);
    let slots = match a.slots {
        Some(n) => n,
        None => available
            .checked_sub(s.config.horizon_slots - 1)
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow!("no slot at {} has a full look-ahead", a.start_slot))?,
    };
    let span = s
        .demand
        .window(a.start_slot, slots)
        .with_context(|| format!("cannot operate {slots} slots from slot {}", a.start_slot))?;
    let cfg = s.normalized_config(&span)?;
    let opts = OperateOptions {
        mcs1: !a.fleet.no_mcs1,
        mcs2: !a.fleet.no_mcs2,
        repeat_scheduling: a.fleet.repeat_scheduling,
    };
    let r = operate_mpc(&plan, &s.network, &s.demand, &f, a.start_slot, slots, &cfg, &opts)
        .context("operation failed")?;

    let reference = match &s.reference_plan {
        Some(p) => Some((
            utility::evaluate_slots(p, &s.network, &span, &cfg)?,
            budget_used(p, &cfg),
        )),
        None => None,
    };
    let ref_breakdown = reference.as_ref().map(|(e, _)| e.breakdown);
    let mut approaches = Vec::new();
    if let Some((e, used)) = &reference {
        approaches.push(report::approach(
            REFERENCE_NAME,
            e.breakdown,
            e.slots.clone(),
            *used,
            ref_breakdown.as_ref(),
        ));
    }
    let name = a.name.clone().unwrap_or_else(|| {
        let mut n = String::from("operated");
        if a.no_mpc {
            n.push_str("-no-mpc");
        }
        if a.fleet.no_mcs1 {
            n.push_str("-no-mcs1");
        }
        if a.fleet.no_mcs2 {
            n.push_str("-no-mcs2");
        }
        n
    });
    approaches.push(report::approach(
        &name,
        r.total,
        r.slots.iter().map(|x| x.terms).collect(),
        r.budget_used_cny,
        ref_breakdown.as_ref(),
    ));
    if let Some(p) = &a.events {
        let rows: Vec<Vec<String>> = r
            .events
            .iter()
            .map(|e| {
                vec![
                    e.slot.to_string(),
                    e.mc.to_string(),
                    e.kind.as_str().to_string(),
                    e.target.to_string(),
                    e.arrival_min.to_string(),
                    e.discount.to_string(),
                ]
            })
            .collect();
        let header = ["slot", "mc", "kind", "target_node", "arrival_min", "discount"];
        emit(Some(p), &csv_text(&header, &rows)?)?;
    }
    let out = MetricsReport {
        reference: ref_breakdown,
        approaches,
        meta: RunMeta {
            seed: a.seed,
            config_hash: report::config_hash(&s.config)?,
            start_slot: a.start_slot,
            runtime_s: started.elapsed().as_secs_f64(),
        },
    };
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&out)? + "\n"))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if a.mu.is_nan() || a.mu <= 0.0 {
        bail!("--mu must be positive");
    }
    let mut rows = Vec::new();
    for (i, &rho) in a.rho.iter().enumerate() {
        if rho.is_nan() || rho < 0.0 {
            bail!("utilization {rho} is negative");
        }
        let lambda = rho * a.mu;
        let sim = simulate_md1(lambda, 1.0 / a.mu, a.arrivals, a.w_max_h, a.seed + i as u64)
            .with_context(|| format!("cannot simulate rho = {rho}"))?;
        let analytic = if rho < 1.0 {
            md1_wait(rho, a.mu).to_string()
        } else {
            String::new()
        };
        rows.push(vec![
            rho.to_string(),
            a.mu.to_string(),
            lambda.to_string(),
            a.arrivals.to_string(),
            a.w_max_h.map(|w| w.to_string()).unwrap_or_default(),
            analytic,
            sim.mean_wait_h.to_string(),
            sim.ci_half_width_h.to_string(),
            sim.balk_fraction().to_string(),
        ]);
    }
    let header = [
        "rho",
        "mu_per_h",
        "arrival_rate_per_h",
        "n_arrivals",
        "w_max_h",
        "analytic_wait_h",
        "simulated_wait_h",
        "ci95_half_width_h",
        "balk_fraction",
    ];
    emit(a.out.as_deref(), &csv_text(&header, &rows)?)
}

fn table_csv(r: &MetricsReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in r.table_rows() {
        w.serialize(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let reports = a
        .metrics
        .iter()
        .map(|p| load_json::<MetricsReport>(p, "metrics"))
        .collect::<Result<Vec<_>>>()?;
    let mut merged = MetricsReport::merge(&reports).ok_or_else(|| anyhow!("no metrics files"))?;
    // the existing plan appears once even when several runs carry it
    let mut seen = false;
    merged.approaches.retain(|x| {
        if x.name != REFERENCE_NAME {
            return true;
        }
        !std::mem::replace(&mut seen, true)
    });
    emit(a.out.as_deref(), &table_csv(&merged)?)
}

/// `a..b`, `a..b:step` (inclusive) or `x,y,z`.
pub fn parse_values(text: &str) -> Result<Vec<String>> {
    let text = text.trim();
    if let Some((from, rest)) = text.split_once("..") {
        let (to, step) = rest.split_once(':').unwrap_or((rest, "1"));
        let parse = |s: &str| {
            s.trim()
                .parse::<i64>()
                .with_context(|| format!("bad integer {s:?} in range {text:?}"))
        };
        let (from, to, step) = (parse(from)?, parse(to)?, parse(step)?);
        if step <= 0 || from > to {
            bail!("range {text:?} is empty or has a non-positive step");
        }
        return Ok((from..=to)
            .step_by(step as usize)
            .map(|v| v.to_string())
            .collect());
    }
    let out: Vec<String> = text
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if out.is_empty() {
        bail!("no values in {text:?}");
    }
    Ok(out)
}

fn config_field(param: &str) -> String {
    match param {
        "K" | "k" => "max_chargers".to_string(),
        other => other.replace('-', "_").to_ascii_lowercase(),
    }
}

fn sweep(a: SweepArgs) -> Result<()> {
    let base = load_scenario_file(&a.scenario)?;
    let field = config_field(&a.param);
    let values = parse_values(&a.values)?;
    let learner = learner_config(a.learner_config.as_deref())?;
    let var = format!("{ENV_PREFIX}{}", field.to_ascii_uppercase());
    let mut files = Vec::with_capacity(values.len());
    // the existing plan is installed infrastructure: it is scored as is under every value
    // and is not held to the swept limits
    for v in &values {
        let mut file = base.clone();
        file.config = io::apply_overrides(&file.config, [(var.as_str(), v.as_str())])
            .with_context(|| format!("cannot set {field} = {v}"))?;
        files.push(file);
    }
    // each value gets its own thread and its own copy of the seed
    let results: Vec<Result<MetricsReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .into_iter()
            .zip(&values)
            .map(|(file, v)| {
                let learner = &learner;
                let a = &a;
                let field = &field;
                scope.spawn(move || -> Result<MetricsReport> {
                    let mut file = file;
                    let existing = file.reference_plan.take();
                    let s = into_scenario(file, &a.scenario)
                        .with_context(|| format!("{field} = {v}"))?;
                    let planned = run_driver(
                        &s,
                        existing.as_ref(),
                        &PlanRequest {
                            driver: a.driver,
                            seed: a.seed,
                            budget_evals: a.budget_evals,
                            start_slot: a.start_slot,
                            learner,
                            fleet: a.fleet,
                        },
                    )
                    .with_context(|| format!("planning failed for {field} = {v}"))?;
                    evaluation_report(
                        &s,
                        existing.as_ref(),
                        &[(a.driver.name().to_string(), planned.plan)],
                        a.start_slot,
                        a.seed,
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("sweep worker panicked"))))
            .collect()
    });

    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for (v, r) in values.iter().zip(results) {
        let r = r?;
        for row in r.table_rows() {
            w.serialize((a.param.as_str(), v.as_str(), row))?;
        }
    }
    let body = String::from_utf8(w.into_inner()?)?;
    // serde tuples carry no field names, so the header is spelled out
    let header = "param,value,approach,utility,benefit,benefit_pct,travel_h,travel_pct,\
charging_h,charging_pct,waiting_h,waiting_pct,queuing_loss_ev,queuing_loss_pct,cost_h,cost_pct,\
budget_used_cny\n";
    emit(a.out.as_deref(), &format!("{header}{body}"))
}
