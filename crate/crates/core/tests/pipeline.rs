use imbal_core::groupform::GroupParams;
use imbal_core::predictor::{PredictorConfig, SvrGrid, SvrParams};
use imbal_core::scheduler::{build_problem, verify_solution, SchedulerOptions, WindowInput};
use imbal_core::simulator::{
    prepare_campaign, run, synthetic_campaign, CampaignConfig, ClusterSpec, Mode,
};
use imbal_core::{BatterySpec, Calendar};

fn config(seed: u64) -> CampaignConfig {
    let window = 4;
    CampaignConfig {
        warmup_days: 4,
        horizon_days: 1,
        window,
        space_size: 300,
        scenarios: 5,
        predictor: PredictorConfig {
            window,
            np: 48,
            train_days: 3,
            grid: SvrGrid::single(
                SvrParams {
                    c: 10.0,
                    gamma: 0.002,
                    epsilon: 0.01,
                },
                52,
            ),
            cv_folds: 3,
            regrid: false,
        },
        seed,
        ..CampaignConfig::default()
    }
}

fn clusters() -> Vec<ClusterSpec> {
    vec![
        ClusterSpec {
            count: 12,
            base_scale_kwh: 44.0,
            noise_dsd_kwh: 8.0,
        },
        ClusterSpec {
            count: 8,
            base_scale_kwh: 44.0,
            noise_dsd_kwh: 25.0,
        },
    ]
}

#[test]
fn fleet_to_dispatch() {
    let mut params = GroupParams::default();
    params.mcmc.iterations = 20_000;
    let camp = synthetic_campaign(&clusters(), 5, &params, 0, 4).unwrap();
    let groups = &camp.formation.groups;
    assert!(!groups.is_empty());
    assert_eq!(groups.iter().map(|g| g.size()).sum::<usize>(), 20);
    assert_eq!(groups[0].start, 1);
    for pair in groups.windows(2) {
        assert_eq!(pair[0].end + 1, pair[1].start);
    }

    let bound = groups[0].capacity_bound_kwh;
    assert!(bound > 0.0);
    let prepared = prepare_campaign(&config(4), &camp.demand, &Calendar::default()).unwrap();
    assert_eq!(prepared.end() - prepared.start, 48);
    assert_eq!(prepared.scenarios.len(), 48);

    let battery = BatterySpec::two_e(bound);
    let none = run(&prepared, Mode::NoBattery, &battery).unwrap();
    let sw = run(&prepared, Mode::Sswcd, &battery).unwrap();
    assert_eq!(none.total_cost, prepared.basic_cost());
    assert_eq!(sw.rows.len(), 48);
    assert!(sw.total_cost <= none.total_cost, "{} > {}", sw.total_cost, none.total_cost);
    let cum = sw.rows.last().unwrap().cum_ic;
    assert!((cum - sw.total_cost).abs() < 1e-6 * sw.total_cost.abs().max(1.0));
    for r in &sw.rows {
        assert!(r.soc >= battery.soc_min() - 1e-6 && r.soc <= battery.soc_max() + 1e-6);
        assert!(r.p >= -battery.power_discharge_kw - 1e-6 && r.p <= battery.power_charge_kw + 1e-6);
    }

    let again = run(&prepared, Mode::Sswcd, &battery).unwrap();
    assert_eq!(again, sw);
}

#[test]
fn first_window_solution_verifies() {
    let camp = synthetic_campaign(&clusters(), 5, &GroupParams::default(), 0, 8).unwrap();
    let prepared = prepare_campaign(&config(8), &camp.demand, &Calendar::default()).unwrap();
    let battery = BatterySpec::two_e(camp.formation.groups[0].capacity_bound_kwh);
    let t = prepared.start;
    let input = WindowInput {
        t,
        contracted: prepared.contract[t..t + 4].to_vec(),
        scenarios: prepared.scenarios[0].clone(),
        battery,
        soc_now: 0.5 * (battery.soc_min() + battery.soc_max()),
        tariff: prepared.tariff.clone(),
        c0: prepared.config.c0,
        c1: prepared.config.c1,
    };
    let opts = SchedulerOptions::default();
    let sw = imbal_core::scheduler::solve_window(&input, &opts).unwrap();
    assert!(verify_solution(&input, &sw.problem, &sw.solution.x).is_clean());
    let rebuilt = build_problem(&input, &opts).unwrap();
    assert_eq!(rebuilt.layout, sw.problem.layout);
}
