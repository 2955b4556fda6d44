use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use chargeplan::baseline::highest_demand_baseline;
use chargeplan::io::{plan_from_json, scenario_from_json};
use chargeplan::report::MetricsReport;
use chargeplan::utility;
use chargeplan_cli::{parse_values, run, REFERENCE_NAME};
use serde_json::Value;
use tempfile::TempDir;

const GENERATOR: &str = r#"{
    "nodes": 15,
    "slots": 30,
    "extent_km": 3.0,
    "hotspot_peak": 0.5,
    "depots": 1,
    "reference_stations": 3,
    "model": { "mc_count": 2, "budget_cny": 500000.0 }
}"#;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(f.path("gen.json"), GENERATOR).unwrap();
        f.ok(&["gen", "--seed", "4", "--generator", &f.arg("gen.json"), "--out", &f.arg("s.json")]);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn ok(&self, args: &[&str]) {
        let argv = std::iter::once("chargeplan").chain(args.iter().copied());
        assert_eq!(run(argv), 0, "chargeplan {}", args.join(" "));
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    fn metrics(&self, name: &str) -> MetricsReport {
        serde_json::from_str(&self.read(name)).unwrap()
    }
}

fn binary(args: &[&str], env: &[(&str, &str)]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_chargeplan"))
        .args(args)
        .envs(env.iter().copied())
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn gen_is_deterministic_in_the_seed() {
    let f = Fixture::new();
    let gen = f.arg("gen.json");
    f.ok(&["gen", "--seed", "4", "--generator", &gen, "--out", &f.arg("again.json")]);
    f.ok(&["gen", "--seed", "5", "--generator", &gen, "--out", &f.arg("other.json")]);
    assert_eq!(f.read("s.json"), f.read("again.json"));
    assert_ne!(f.read("s.json"), f.read("other.json"));
    let s = scenario_from_json(&f.read("s.json")).unwrap();
    assert_eq!(s.network.len(), 15);
    assert_eq!(s.demand.slots(), 30);
}

#[test]
fn evaluating_the_existing_plan_gives_100_percent() {
    let f = Fixture::new();
    f.ok(&["evaluate", "--scenario", &f.arg("s.json"), "--out", &f.arg("m.json")]);
    let m: Value = serde_json::from_str(&f.read("m.json")).unwrap();
    let approaches = m["approaches"].as_array().unwrap();
    assert_eq!(approaches.len(), 1);
    assert_eq!(approaches[0]["name"], REFERENCE_NAME);
    let pct = approaches[0]["percent_of_reference"].as_object().unwrap();
    assert_eq!(pct.len(), 6);
    for (k, v) in pct {
        assert_eq!(v.as_f64(), Some(100.0), "{k}");
    }
}

#[test]
fn highest_demand_driver_matches_the_baseline() {
    let f = Fixture::new();
    f.ok(&[
        "plan", "--scenario", &f.arg("s.json"), "--driver", "highest-demand", "--out", &f.arg("hd.json"),
    ]);
    let s = scenario_from_json(&f.read("s.json")).unwrap();
    let plan = plan_from_json(&f.read("hd.json"), &s).unwrap();
    let window = s.demand.window(0, s.config.horizon_slots).unwrap();
    let expected = highest_demand_baseline(&s.network, &window, &s.config, s.depots.clone()).unwrap();
    assert_eq!(plan.stations, expected.stations);
    assert!(!plan.stations.is_empty());
    // the busiest node is always served first
    let totals = window.node_totals();
    let top = (0..totals.len())
        .max_by(|&a, &b| totals[a].total_cmp(&totals[b]).then(b.cmp(&a)))
        .unwrap();
    assert!(plan.has_station(s.network.id_at(top)));
    assert!(plan.mcs.iter().all(|m| !m.employed()));
}

#[test]
fn plan_files_round_trip_through_evaluate() {
    let f = Fixture::new();
    let scen = f.arg("s.json");
    f.ok(&[
        "plan", "--scenario", &scen, "--driver", "sa", "--budget-evals", "400", "--seed", "3",
        "--out", &f.arg("sa.json"), "--curve", &f.arg("sa.csv"),
    ]);
    f.ok(&["plan", "--scenario", &scen, "--driver", "sa", "--budget-evals", "400", "--seed", "3", "--out", &f.arg("sa2.json")]);
    assert_eq!(f.read("sa.json"), f.read("sa2.json"));
    assert!(f.read("sa.csv").starts_with("step,best_utility\n"));

    f.ok(&["evaluate", "--scenario", &scen, "--plan", &f.arg("sa.json"), "--out", &f.arg("m.json")]);
    let m = f.metrics("m.json");
    let s = scenario_from_json(&f.read("s.json")).unwrap();
    let plan = plan_from_json(&f.read("sa.json"), &s).unwrap();
    let window = s.demand.window(0, s.config.horizon_slots).unwrap();
    let cfg = s.normalized_config(&window).unwrap();
    let direct = utility::evaluate(&plan, &s.network, &window, &cfg).unwrap();
    let scored = m.approaches.iter().find(|a| a.name == "sa").unwrap();
    assert_eq!(scored.breakdown, direct.breakdown);
    assert_eq!(scored.slots, direct.slots);
}

#[test]
fn greedy_and_learner_drivers_write_plans_and_curves() {
    let f = Fixture::new();
    let scen = f.arg("s.json");
    fs::write(
        f.path("learner.json"),
        r#"{ "batch_size": 8, "replay_capacity": 200, "hidden": 8, "target_sync": 20 }"#,
    )
    .unwrap();
    f.ok(&[
        "plan", "--scenario", &scen, "--driver", "learner", "--budget-evals", "150",
        "--learner-config", &f.arg("learner.json"), "--out", &f.arg("lr.json"), "--curve", &f.arg("lr.csv"),
    ]);
    assert!(f.read("lr.csv").starts_with("step,episode,mean_episode_reward\n"));
    f.ok(&["plan", "--scenario", &scen, "--driver", "greedy", "--budget-evals", "200", "--no-mcs2", "--out", &f.arg("g.json")]);
    let s = scenario_from_json(&f.read("s.json")).unwrap();
    for name in ["lr.json", "g.json"] {
        plan_from_json(&f.read(name), &s).unwrap();
    }
}

#[test]
fn report_is_byte_deterministic() {
    let f = Fixture::new();
    let scen = f.arg("s.json");
    f.ok(&["plan", "--scenario", &scen, "--driver", "highest-demand", "--out", &f.arg("hd.json")]);
    for run_id in ["a", "b"] {
        let m = format!("m{run_id}.json");
        f.ok(&["evaluate", "--scenario", &scen, "--plan", &f.arg("hd.json"), "--seed", "7", "--out", &f.arg(&m)]);
        f.ok(&["report", &f.arg(&m), &f.arg("ma.json"), "--out", &f.arg(&format!("t{run_id}.csv"))]);
    }
    assert_eq!(f.read("ta.csv"), f.read("tb.csv"));
    let table = f.read("ta.csv");
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("approach,utility,benefit,benefit_pct"));
    // the existing plan appears once, the two hd runs twice
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with(REFERENCE_NAME));
}

#[test]
fn operate_without_heuristics_scores_the_static_plan() {
    let f = Fixture::new();
    let scen = f.arg("s.json");
    f.ok(&["plan", "--scenario", &scen, "--driver", "highest-demand", "--out", &f.arg("hd.json")]);
    f.ok(&[
        "operate", "--scenario", &scen, "--plan", &f.arg("hd.json"), "--start-slot", "5", "--slots", "4",
        "--no-mcs1", "--no-mcs2", "--out", &f.arg("op.json"), "--events", &f.arg("ev.csv"),
    ]);
    let m = f.metrics("op.json");
    let s = scenario_from_json(&f.read("s.json")).unwrap();
    let plan = plan_from_json(&f.read("hd.json"), &s).unwrap();
    let span = s.demand.window(5, 4).unwrap();
    let cfg = s.normalized_config(&span).unwrap();
    let direct = utility::evaluate_slots(&plan, &s.network, &span, &cfg).unwrap();
    let op = m.approaches.iter().find(|a| a.name == "operated-no-mcs1-no-mcs2").unwrap();
    assert_eq!(op.breakdown, direct.breakdown);
    let events = f.read("ev.csv");
    assert!(events.starts_with("slot,mc,kind,target_node,arrival_min,discount\n"));
    assert!(events.lines().skip(1).all(|l| l.contains(",idle,")));
    assert_eq!(events.lines().count(), 1 + 4 * s.config.mc_count);

    f.ok(&[
        "operate", "--scenario", &scen, "--plan", &f.arg("hd.json"), "--start-slot", "5", "--slots", "4",
        "--no-mpc", "--out", &f.arg("nompc.json"),
    ]);
    assert!(f.metrics("nompc.json").approaches.iter().any(|a| a.name == "operated-no-mpc"));
    f.ok(&[
        "operate", "--scenario", &scen, "--plan", &f.arg("hd.json"), "--start-slot", "26",
        "--forecaster", "seasonal-naive", "--season", "24", "--out", &f.arg("sn.json"),
    ]);
    let sn = f.metrics("sn.json");
    assert_eq!(sn.approaches.last().unwrap().slots.len(), 2);
}

#[test]
fn simulate_writes_analytic_and_simulated_waits() {
    let f = Fixture::new();
    f.ok(&["simulate", "--arrivals", "200000", "--seed", "1", "--out", &f.arg("q.csv")]);
    let text = f.read("q.csv");
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let mid = &rows[1];
    let analytic: f64 = mid[col("analytic_wait_h")].parse().unwrap();
    let simulated: f64 = mid[col("simulated_wait_h")].parse().unwrap();
    assert!((analytic - 0.2215).abs() < 1e-4);
    assert!((simulated - analytic).abs() / analytic < 0.05);
}

#[test]
fn sweep_over_k_emits_one_block_per_value() {
    let f = Fixture::new();
    f.ok(&[
        "sweep", "--scenario", &f.arg("s.json"), "--param", "K", "--values", "4..36:16",
        "--driver", "greedy", "--budget-evals", "150", "--out", &f.arg("k.csv"),
    ]);
    let text = f.read("k.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("param,value,approach,utility"));
    assert_eq!(lines.len(), 1 + 3 * 2);
    for (i, k) in ["4", "20", "36"].iter().enumerate() {
        assert!(lines[1 + 2 * i].starts_with(&format!("K,{k},{REFERENCE_NAME},")));
        assert!(lines[2 + 2 * i].starts_with(&format!("K,{k},greedy,")));
    }
}

#[test]
fn value_lists_parse() {
    assert_eq!(parse_values("4..8").unwrap(), ["4", "5", "6", "7", "8"]);
    assert_eq!(parse_values("4..36:16").unwrap(), ["4", "20", "36"]);
    assert_eq!(parse_values("1e5, 2e5").unwrap(), ["1e5", "2e5"]);
    assert!(parse_values("9..3").is_err());
    assert!(parse_values("a..3").is_err());
    assert!(parse_values(" , ").is_err());
}

fn stderr_of(args: &[&str], env: &[(&str, &str)], code: i32) -> String {
    let (got, err) = binary(args, env);
    assert_eq!(got, code, "{args:?}: {err}");
    err
}

#[test]
fn failures_exit_nonzero_with_distinct_messages() {
    let f = Fixture::new();
    let scen = f.arg("s.json");
    fs::write(f.path("bad.json"), "{ \"nodes\": [").unwrap();

    let missing = stderr_of(&["evaluate", "--scenario", &f.arg("none.json")], &[], 1);
    assert!(missing.contains("cannot read"), "{missing}");
    let malformed = stderr_of(&["evaluate", "--scenario", &f.arg("bad.json")], &[], 1);
    assert!(malformed.contains("malformed scenario file"), "{malformed}");
    let bad_plan = stderr_of(&["evaluate", "--scenario", &scen, "--plan", &f.arg("bad.json")], &[], 1);
    assert!(bad_plan.contains("plan file"), "{bad_plan}");
    let flag = stderr_of(&["plan", "--scenario", &scen, "--bogus"], &[], 2);
    assert!(flag.contains("--bogus"), "{flag}");
    let driver = stderr_of(&["plan", "--scenario", &scen, "--driver", "magic"], &[], 2);
    assert!(driver.contains("magic"), "{driver}");
    let infeasible = stderr_of(&["evaluate", "--scenario", &scen], &[("CHARGEPLAN_ALPHA", "3")], 1);
    assert!(infeasible.contains("invalid configuration override"), "{infeasible}");
    let typo = stderr_of(&["evaluate", "--scenario", &scen], &[("CHARGEPLAN_BUDGET", "3")], 1);
    assert!(typo.contains("does not name a configuration field"), "{typo}");
    // a smaller K makes the existing plan infeasible
    let k = stderr_of(&["evaluate", "--scenario", &scen], &[("CHARGEPLAN_MAX_CHARGERS", "1")], 1);
    assert!(k.contains("infeasible scenario"), "{k}");
    let no_plan = stderr_of(
        &["operate", "--scenario", &scen, "--plan", &f.arg("none.json")],
        &[],
        1,
    );
    assert!(no_plan.contains("cannot read"), "{no_plan}");
    let sweep = stderr_of(
        &["sweep", "--scenario", &scen, "--param", "K", "--values", "x"],
        &[],
        1,
    );
    assert!(sweep.contains("cannot set max_chargers"), "{sweep}");
}

#[test]
fn environment_overrides_reach_the_generator() {
    let f = Fixture::new();
    let out = f.arg("env.json");
    let (code, err) = binary(
        &["gen", "--seed", "4", "--generator", &f.arg("gen.json"), "--out", &out],
        &[("CHARGEPLAN_MC_COUNT", "3"), ("CHARGEPLAN_BUDGET_CNY", "123456")],
    );
    assert_eq!(code, 0, "{err}");
    let s = scenario_from_json(&fs::read_to_string(Path::new(&out)).unwrap()).unwrap();
    assert_eq!(s.config.mc_count, 3);
    assert_eq!(s.config.budget_cny, 123456.0);
}
