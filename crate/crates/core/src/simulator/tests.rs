use super::*;
use alloc::vec;
use proptest::prelude::*;

use crate::predictor::{SvrGrid, SvrParams};
use crate::stats::compute_mdsd;

fn small_config(seed: u64) -> CampaignConfig {
    let window = 4;
    CampaignConfig {
        warmup_days: 3,
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

fn small_demand(noise: f64, seed: u64) -> DemandSeries {
    let clusters = [ClusterSpec {
        count: 6,
        base_scale_kwh: 40.0,
        noise_dsd_kwh: noise,
    }];
    let fleet = generate_synthetic_fleet(&clusters, 4, standard_start(), seed).unwrap();
    let refs: Vec<&DemandSeries> = fleet.iter().collect();
    DemandSeries::aggregate("g", &refs).unwrap()
}

fn battery(cap: f64) -> BatterySpec {
    BatterySpec::two_e(cap)
}

#[test]
fn fleet_clusters_form_separate_bands() {
    let clusters = [
        ClusterSpec { count: 10, base_scale_kwh: 50.0, noise_dsd_kwh: 2.0 },
        ClusterSpec { count: 10, base_scale_kwh: 50.0, noise_dsd_kwh: 10.0 },
    ];
    let fleet = generate_synthetic_fleet(&clusters, 34, standard_start(), 9).unwrap();
    assert_eq!(fleet.len(), 20);
    assert_eq!(fleet[0].len(), 34 * 48);
    let m: Vec<f64> = fleet.iter().map(|s| compute_mdsd(s).unwrap()).collect();
    let low = m[..10].iter().cloned().fold(0.0, f64::max);
    let high = m[10..].iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(low < high, "{low} {high}");
}

#[test]
fn zero_noise_customers_have_zero_mdsd() {
    let clusters = [ClusterSpec { count: 3, base_scale_kwh: 20.0, noise_dsd_kwh: 0.0 }];
    let fleet = generate_synthetic_fleet(&clusters, 10, standard_start(), 1).unwrap();
    for s in &fleet {
        assert!(compute_mdsd(s).unwrap() < 1e-9);
    }
}

#[test]
fn fleet_is_seeded() {
    let c = standard_clusters();
    let a = generate_synthetic_fleet(&c, 2, standard_start(), 4).unwrap();
    let b = generate_synthetic_fleet(&c, 2, standard_start(), 4).unwrap();
    let d = generate_synthetic_fleet(&c, 2, standard_start(), 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, d);
    assert!(generate_synthetic_fleet(&c, 0, standard_start(), 4).is_err());
}

#[test]
fn contract_noise_model() {
    let dm: Vec<f64> = (0..1000).map(|i| 50.0 + (i % 7) as f64 * 10.0).collect();
    assert_eq!(make_contract(&dm, 0.0, 1).unwrap(), dm);
    assert_eq!(make_contract(&[0.0, 0.0], 0.3, 1).unwrap(), vec![0.0, 0.0]);
    let sp = make_contract(&dm, 0.1, 2).unwrap();
    let rel: Vec<f64> = sp.iter().zip(&dm).map(|(s, d)| (s - d) / d).collect();
    let mean = math::mean(&rel);
    let std = math::sqrt(rel.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (rel.len() - 1) as f64);
    assert!((std - 0.1).abs() < 0.02, "{std}");
    assert!(make_contract(&dm, -0.1, 2).is_err());
}

#[test]
fn perfect_contract_costs_nothing_without_battery() {
    let mut cfg = small_config(3);
    cfg.contract_error_frac = 0.0;
    let prep = prepare_campaign(&cfg, &small_demand(2.0, 3), &Calendar::default()).unwrap();
    let tr = run_no_battery(&prep).unwrap();
    assert_eq!(tr.total_cost, 0.0);
    assert_eq!(tr.rows.len(), 48);
}

fn check_trace(prep: &PreparedCampaign, tr: &SimulationTrace) {
    let b = &tr.battery;
    let mut cum = 0.0;
    let mut energy = 0.0;
    for r in &tr.rows {
        assert!((r.im - (r.sp - r.dm - r.p)).abs() < 1e-9);
        assert!((r.ic - prep.tariff.cost(r.im)).abs() < 1e-9);
        cum += r.ic;
        assert!((r.cum_ic - cum).abs() < 1e-6);
        assert!(r.soc >= b.soc_min() - 1e-9 && r.soc <= b.soc_max() + 1e-9);
        assert!(r.p >= -b.power_discharge_kw - 1e-9 && r.p <= b.power_charge_kw + 1e-9);
        energy += if r.p >= 0.0 { b.eta_charge * r.p } else { r.p / b.eta_discharge };
    }
    let end = tr.rows.last().unwrap().soc;
    assert!((end - tr.soc_start - energy).abs() < 1e-5 * (1.0 + b.capacity_kwh), "{} vs {}", end - tr.soc_start, energy);
    assert!((tr.total_cost - cum).abs() < 1e-6);
}

#[test]
fn campaign_invariants_hold_in_every_mode() {
    let prep = prepare_campaign(&small_config(11), &small_demand(4.0, 11), &Calendar::default()).unwrap();
    let basic = run_no_battery(&prep).unwrap();
    check_trace(&prep, &basic);
    assert!((basic.total_cost - prep.basic_cost()).abs() < 1e-9);
    let b = battery(150.0);
    let s = run_sswcd(&prep, &b).unwrap();
    check_trace(&prep, &s);
    let d = run_deterministic(&prep, &b).unwrap();
    check_trace(&prep, &d);
    assert!(s.total_cost <= basic.total_cost, "{} > {}", s.total_cost, basic.total_cost);
    assert!(s.rows.iter().any(|r| r.p != 0.0));
}

#[test]
fn zero_power_battery_matches_no_battery() {
    let prep = prepare_campaign(&small_config(5), &small_demand(4.0, 5), &Calendar::default()).unwrap();
    let a = run_sswcd(&prep, &BatterySpec::none()).unwrap();
    let b = run_no_battery(&prep).unwrap();
    assert_eq!(a.rows, b.rows);
}

#[test]
fn single_scenario_is_deterministic_mode() {
    let mut cfg = small_config(6);
    cfg.scenarios = 1;
    let prep = prepare_campaign(&cfg, &small_demand(4.0, 6), &Calendar::default()).unwrap();
    let b = battery(100.0);
    assert_eq!(run_sswcd(&prep, &b).unwrap().rows, run_deterministic(&prep, &b).unwrap().rows);
}

#[test]
fn clean_world_keeps_imbalance_tiny() {
    let mut cfg = small_config(8);
    cfg.contract_error_frac = 0.0;
    let demand = small_demand(0.0, 8);
    let prep = prepare_campaign(&cfg, &demand, &Calendar::default()).unwrap();
    let tr = run_sswcd(&prep, &battery(50.0)).unwrap();
    let abs_im: f64 = tr.rows.iter().map(|r| r.im.abs()).sum();
    let total: f64 = tr.rows.iter().map(|r| r.dm).sum();
    assert!(abs_im <= 0.01 * total, "{abs_im} vs {total}");
}

#[test]
fn campaigns_are_reproducible() {
    let run_once = || {
        let prep = prepare_campaign(&small_config(21), &small_demand(4.0, 21), &Calendar::default()).unwrap();
        (prep.errors.clone(), run_sswcd(&prep, &battery(80.0)).unwrap())
    };
    assert_eq!(run_once(), run_once());
}

#[test]
fn forecast_errors_are_scored_per_lag() {
    let prep = prepare_campaign(&small_config(2), &small_demand(4.0, 2), &Calendar::default()).unwrap();
    // period start+k is covered by min(k+1, w) forecasts
    let expected: usize = (0..48).map(|k: usize| (k + 1).min(4)).sum();
    assert_eq!(prep.errors.len(), expected);
    let e = prep.errors.iter().find(|e| e.lag == 2).unwrap();
    assert_eq!(e.predicted, prep.forecasts[e.period - 2 - prep.start][2]);
    assert_eq!(prep.forecasts.last().unwrap().len(), 1);
    assert_eq!(prep.scenarios[0].len(), 5);
}

#[test]
fn sweep_starts_at_basic_cost() {
    let prep = prepare_campaign(&small_config(4), &small_demand(4.0, 4), &Calendar::default()).unwrap();
    let pts = capacity_sweep(&prep, &[0.0, 100.0]).unwrap();
    assert_eq!(pts[0].pct_of_basic, 100.0);
    assert!(pts[1].pct_of_basic <= 100.0);
    assert!(capacity_sweep(&prep, &[100.0, 0.0]).is_err());
}

#[test]
fn config_validation() {
    let mut c = small_config(1);
    c.scenarios = 0;
    assert!(c.validate().is_err());
    let mut c = small_config(1);
    c.predictor.window = 3;
    assert!(c.validate().is_err());
    let mut c = small_config(1);
    c.warmup_days = 2;
    assert!(c.validate().is_err());
    assert!(prepare_campaign(&small_config(1), &small_demand(1.0, 1).slice(0..100), &Calendar::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn contract_is_non_negative(dm in proptest::collection::vec(0.0f64..1e4, 1..50), frac in 0.0f64..2.0, seed in 0u64..100) {
        let sp = make_contract(&dm, frac, seed).unwrap();
        prop_assert!(sp.iter().all(|v| *v >= 0.0));
        prop_assert_eq!(sp.len(), dm.len());
    }
}
