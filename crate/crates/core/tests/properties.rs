use std::collections::BTreeMap;

use chargeplan::config::ScenarioConfig;
use chargeplan::demand::allocate_demand;
use chargeplan::io::{plan_from_json, plan_to_json, scenario_from_json, scenario_to_json};
use chargeplan::mcs::discount;
use chargeplan::plan::Station;
use chargeplan::scenario::{generate_scenario, GeneratorConfig, Scenario};
use chargeplan::utility::{self, arrival_cap, queue_stats};
use proptest::prelude::*;

fn generated(nodes: usize, slots: usize, mc_count: usize, seed: u64) -> Scenario {
    let g = GeneratorConfig {
        nodes,
        slots,
        depots: nodes.min(2),
        reference_stations: nodes.min(4),
        model: ScenarioConfig {
            mc_count,
            horizon_slots: slots,
            budget_cny: 1e7,
            ..Default::default()
        },
        ..Default::default()
    };
    generate_scenario(&g, seed).unwrap()
}

/// A plan with stations at the nodes picked by `mask` and fleets sent to `targets`.
fn plan_from_choices(s: &Scenario, mask: &[bool], targets: &[Option<usize>]) -> chargeplan::plan::ChargingPlan {
    let mut plan = s.empty_plan().unwrap();
    let kinds = s.config.charger_kinds();
    for (v, &on) in mask.iter().enumerate().take(s.network.len()) {
        if on {
            let mut x = vec![0; kinds];
            x[v % kinds] = 1 + (v % 3) as u32;
            plan.insert_station(Station::fixed(s.network.id_at(v), x)).unwrap();
        }
    }
    let n = s.network.len();
    let mut it = targets.iter().cycle();
    for mc in &mut plan.mcs {
        for t in &mut mc.targets {
            *t = it.next().copied().flatten().map(|v| s.network.id_at(v % n));
        }
    }
    plan.refresh(&s.network, &s.config).unwrap();
    plan
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shortest_paths_obey_the_triangle_inequality(nodes in 2usize..25, seed in any::<u64>()) {
        let s = generated(nodes, 1, 0, seed);
        let net = &s.network;
        for u in 0..nodes {
            prop_assert_eq!(net.dist_idx(u, u), 0.0);
            for v in 0..nodes {
                for w in 0..nodes {
                    let direct = net.dist_idx(u, w);
                    let via = net.dist_idx(u, v) + net.dist_idx(v, w);
                    prop_assert!(direct <= via + 1e-9 * via.max(1.0));
                }
            }
        }
    }

    #[test]
    fn discount_stays_in_unit_interval(arrival in -1e4f64..1e4, slot in 0usize..100, minutes in 1.0f64..240.0) {
        let d = discount(arrival, slot, minutes);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn fleet_trajectories_keep_discount_and_energy_in_range(
        seed in any::<u64>(),
        targets in prop::collection::vec(prop::option::of(0usize..30), 1..40),
    ) {
        let s = generated(10, 6, 2, seed);
        let plan = plan_from_choices(&s, &[true, false, true, false, false, true], &targets);
        for mc in &plan.mcs {
            prop_assert_eq!(mc.trajectory.len(), s.config.horizon_slots);
            for slot in &mc.trajectory {
                prop_assert!((0.0..=1.0).contains(&slot.discount));
                prop_assert!(slot.energy_kwh >= -1e-9);
                prop_assert!(slot.energy_kwh <= s.config.fleet_battery_kwh() + 1e-9);
            }
        }
    }

    #[test]
    fn allocation_preserves_station_totals(
        seed in any::<u64>(),
        series in prop::collection::vec(prop::collection::vec(0.0f64..50.0, 4), 1..5),
    ) {
        let s = generated(12, 1, 0, seed);
        let stations: BTreeMap<_, _> = series
            .iter()
            .enumerate()
            .map(|(i, row)| (s.network.id_at(i * 2), row.clone()))
            .collect();
        let out = allocate_demand(&stations, &s.network, 60.0, 0.1).unwrap();
        for t in 0..4 {
            let expected: f64 = stations.values().map(|r| r[t]).sum();
            let got: f64 = out.row(t).iter().sum();
            prop_assert!((got - expected).abs() <= 1e-9 * expected.max(1.0));
            prop_assert!(out.row(t).iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn served_arrivals_never_exceed_the_cap(capacity in 0.0f64..2000.0, arrivals in 0.0f64..500.0) {
        let cfg = ScenarioConfig::default();
        let q = queue_stats(capacity, arrivals, &cfg);
        prop_assert!(q.served <= arrivals + 1e-12);
        prop_assert!(q.wait_h <= cfg.max_wait_hours() + 1e-12);
        prop_assert!(q.loss() >= 0.0);
        if capacity > 0.0 {
            prop_assert!(q.served <= arrival_cap(capacity, cfg.ev_energy_kwh, cfg.max_wait_hours()) + 1e-12);
            prop_assert!(q.utilization < 1.0);
        }
    }

    #[test]
    fn files_round_trip(
        seed in any::<u64>(),
        mask in prop::collection::vec(any::<bool>(), 8),
        targets in prop::collection::vec(prop::option::of(0usize..8), 1..10),
    ) {
        let s = generated(8, 4, 1, seed);
        let back = scenario_from_json(&scenario_to_json(&s).unwrap()).unwrap();
        prop_assert_eq!(&back.demand, &s.demand);
        prop_assert_eq!(back.network.edges(), s.network.edges());
        let plan = plan_from_choices(&s, &mask, &targets);
        let again = plan_from_json(&plan_to_json(&plan).unwrap(), &s).unwrap();
        prop_assert_eq!(&again, &plan);
        let window = s.demand.window(0, s.config.horizon_slots).unwrap();
        let a = utility::evaluate(&plan, &s.network, &window, &s.config).unwrap();
        let b = utility::evaluate(&again, &s.network, &window, &s.config).unwrap();
        prop_assert_eq!(a.breakdown, b.breakdown);
    }

    #[test]
    fn empty_plan_scores_zero(seed in any::<u64>(), nodes in 1usize..15) {
        let s = generated(nodes, 3, 0, seed);
        let window = s.demand.window(0, 3).unwrap();
        let cfg = s.normalized_config(&window).unwrap();
        let e = utility::evaluate(&s.empty_plan().unwrap(), &s.network, &window, &cfg).unwrap();
        prop_assert_eq!(e.breakdown.utility, 0.0);
    }
}
