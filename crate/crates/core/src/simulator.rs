//! Closed-loop campaign driver.
//!
//! A campaign takes the aggregated demand of one balancing group, builds a
//! noisy day-ahead contract, and then walks the horizon period by period:
//! retrain the forecaster at day boundaries, forecast the window, generate
//! and reduce scenarios, solve the window MILP from the current SOC, apply the
//! first dispatch and settle the realized imbalance.
//!
//! Forecasts and scenario sets depend only on demand, never on dispatch, so
//! they are computed once per campaign ([`PreparedCampaign`]) and shared by
//! the stochastic, deterministic and no-battery runs and by capacity sweeps.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::groupform::{self, Group, GroupFormation, GroupParams};
use crate::predictor::{PredictError, PredictionError, Predictor, PredictorConfig, RetrainOutcome};
use crate::rng::{derive_seed, rng_from, stream};
use crate::scengen::{self, ErrorStats, ScenarioSet, VariabilityStats};
use crate::scheduler::{self, ScheduleError, SchedulerOptions, WindowInput};
use crate::stats::DacVector;
use crate::tariff::{DEFAULT_BIG_M, DEFAULT_PRICES};
use crate::{math, BatterySpec, Calendar, CoreError, DemandSeries, ImbalanceTariff};

pub const DEFAULT_WARMUP_DAYS: usize = 20;
pub const DEFAULT_HORIZON_DAYS: usize = 14;
pub const DEFAULT_SCENARIOS: usize = 57;
pub const DEFAULT_CONTRACT_ERROR: f64 = 0.10;
pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid campaign: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("forecasting failed: {0}")]
    Predict(#[from] PredictError),
    #[error("group formation failed: {0}")]
    Groups(#[from] groupform::GroupError),
    #[error("window solve failed at period {t}: {source}")]
    Schedule {
        t: usize,
        source: ScheduleError,
        /// The window that failed, for dumping.
        input: Box<WindowInput>,
    },
}

/// One homogeneous block of synthetic customers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub count: usize,
    /// Mean energy per period (kWh).
    pub base_scale_kwh: f64,
    /// Target per-period standard deviation across days (kWh).
    pub noise_dsd_kwh: f64,
}

/// Daily double-peak shape with mean 1 over the day.
fn base_profile(per_day: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..per_day)
        .map(|p| {
            let h = 24.0 * (p as f64 + 0.5) / per_day as f64;
            let bump = |c: f64, w: f64| math::exp(-(h - c) * (h - c) / (2.0 * w * w));
            0.6 + 0.5 * bump(7.5, 1.5) + 0.9 * bump(19.5, 2.0)
        })
        .collect();
    let mean = math::mean(&raw);
    raw.into_iter().map(|v| v / mean).collect()
}

/// Midday hump added on weekends, scaled by the customer's noise level.
fn off_day_shape(per_day: usize) -> Vec<f64> {
    (0..per_day)
        .map(|p| {
            let h = 24.0 * (p as f64 + 0.5) / per_day as f64;
            math::exp(-(h - 13.0) * (h - 13.0) / (2.0 * 3.0 * 3.0))
        })
        .collect()
}

/// Synthetic fleet of half-hourly customers: `scale × profile`, a weekend
/// midday hump of height `noise_dsd`, and Gaussian period noise whose std is
/// drawn within ±10 % of the cluster's `noise_dsd`. Values are clamped at 0.
pub fn generate_synthetic_fleet(
    clusters: &[ClusterSpec],
    days: usize,
    start: NaiveDate,
    seed: u64,
) -> Result<Vec<DemandSeries>, SimError> {
    if days == 0 {
        return Err(SimError::InvalidConfig("fleet needs at least one day".into()));
    }
    for c in clusters {
        if !(c.base_scale_kwh.is_finite() && c.base_scale_kwh >= 0.0 && c.noise_dsd_kwh.is_finite() && c.noise_dsd_kwh >= 0.0) {
            return Err(SimError::InvalidConfig(format!("cluster scales must be finite and >= 0: {c:?}")));
        }
    }
    let per_day = 48;
    let profile = base_profile(per_day);
    let hump = off_day_shape(per_day);
    let weekends = Calendar::default();
    let mut rng = rng_from(derive_seed(seed, &[stream::FLEET]));
    let mut fleet = Vec::new();
    let mut id = 0usize;
    for c in clusters {
        for _ in 0..c.count {
            let scale = c.base_scale_kwh * (1.0 + 0.1 * rng.random_range(-1.0..1.0));
            let sigma = c.noise_dsd_kwh * (1.0 + 0.1 * rng.random_range(-1.0..1.0));
            let mut values = Vec::with_capacity(days * per_day);
            for d in 0..days {
                let date = start + chrono::Duration::days(d as i64);
                let off = weekends.is_off_day(date);
                for p in 0..per_day {
                    let z: f64 = rng.sample(StandardNormal);
                    let mut v = scale * profile[p] + sigma * z;
                    if off {
                        v += c.noise_dsd_kwh * hump[p];
                    }
                    values.push(v.max(0.0));
                }
            }
            fleet.push(DemandSeries::daily(format!("c{id:04}"), start, values)?);
            id += 1;
        }
    }
    Ok(fleet)
}

/// `Sp_i = max(0, Dm_i + ε_i)`, `ε_i ~ N(0, error_frac·Dm_i)`.
pub fn make_contract(actual: &[f64], error_frac: f64, seed: u64) -> Result<Vec<f64>, SimError> {
    if !(error_frac.is_finite() && error_frac >= 0.0) {
        return Err(SimError::InvalidConfig(format!("contract error fraction {error_frac} must be >= 0")));
    }
    let mut rng = rng_from(derive_seed(seed, &[stream::CONTRACT]));
    Ok(actual
        .iter()
        .map(|&d| {
            let z: f64 = rng.sample(StandardNormal);
            (d + error_frac * d * z).max(0.0)
        })
        .collect())
}

/// Sort the fleet by its demand aggregation criterion and split it into
/// balancing groups.
pub fn form_fleet_groups(fleet: &[DemandSeries], params: &GroupParams, seed: u64) -> Result<GroupFormation, SimError> {
    let dac = DacVector::from_series(fleet.iter())?;
    Ok(groupform::form_groups(&dac, params, seed)?)
}

/// Aggregated demand of the members of `group`.
pub fn group_series(fleet: &[DemandSeries], group: &Group, id: &str) -> Result<DemandSeries, SimError> {
    let members: Vec<&DemandSeries> = group
        .customer_ids
        .iter()
        .map(|cid| {
            fleet
                .iter()
                .find(|s| s.customer_id() == cid)
                .ok_or_else(|| SimError::InvalidConfig(format!("customer {cid} not in fleet")))
        })
        .collect::<Result<_, _>>()?;
    Ok(DemandSeries::aggregate(id, &members)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub warmup_days: usize,
    pub horizon_days: usize,
    pub window: usize,
    pub space_size: usize,
    pub scenarios: usize,
    pub contract_error_frac: f64,
    /// `Th` as a fraction of the largest contracted supply in the horizon.
    pub threshold_frac: f64,
    pub prices: Vec<f64>,
    pub big_m: f64,
    pub c0: f64,
    pub c1: f64,
    pub soc_init_frac: f64,
    /// Prior error std as a fraction of the mean training-window demand.
    pub floor_frac: f64,
    pub sweep_capacities: Vec<f64>,
    pub predictor: PredictorConfig,
    pub scheduler: SchedulerOptions,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            warmup_days: DEFAULT_WARMUP_DAYS,
            horizon_days: DEFAULT_HORIZON_DAYS,
            window: crate::predictor::DEFAULT_WINDOW,
            space_size: scengen::DEFAULT_SPACE_SIZE,
            scenarios: DEFAULT_SCENARIOS,
            contract_error_frac: DEFAULT_CONTRACT_ERROR,
            threshold_frac: DEFAULT_THRESHOLD_FRAC,
            prices: DEFAULT_PRICES.to_vec(),
            big_m: DEFAULT_BIG_M,
            c0: scheduler::DEFAULT_C0,
            c1: scheduler::DEFAULT_C1,
            soc_init_frac: 0.5,
            floor_frac: scengen::DEFAULT_FLOOR_FRAC,
            sweep_capacities: Vec::new(),
            predictor: PredictorConfig::default(),
            scheduler: SchedulerOptions::default(),
            seed: 0,
        }
    }
}

impl CampaignConfig {
    /// The reduced profile used for tests: `|S| = 15`.
    pub fn standard(seed: u64) -> Self {
        Self {
            scenarios: 15,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.warmup_days == 0 || self.horizon_days == 0 || self.window == 0 {
            return bad("warm-up, horizon and window must be positive".into());
        }
        if self.space_size == 0 || self.scenarios == 0 || self.scenarios > self.space_size {
            return bad(format!(
                "need 1 <= scenarios ({}) <= space size ({})",
                self.scenarios, self.space_size
            ));
        }
        if self.window > 48 {
            return bad(format!("window {} exceeds one day", self.window));
        }
        if self.predictor.window != self.window {
            return bad(format!(
                "predictor window {} differs from campaign window {}",
                self.predictor.window, self.window
            ));
        }
        if self.predictor.train_days > self.warmup_days {
            return bad(format!(
                "training window ({} days) longer than warm-up ({} days)",
                self.predictor.train_days, self.warmup_days
            ));
        }
        if !(self.threshold_frac > 0.0 && self.threshold_frac.is_finite()) {
            return bad("threshold fraction must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.soc_init_frac) || !(self.floor_frac >= 0.0 && self.floor_frac.is_finite()) {
            return bad("initial SOC fraction must lie in [0, 1] and the floor fraction must be >= 0".into());
        }
        if !(self.c0 >= 0.0 && self.c1 >= 0.0) {
            return bad("weights must be >= 0".into());
        }
        if !(self.contract_error_frac >= 0.0 && self.contract_error_frac.is_finite()) {
            return bad("contract error fraction must be >= 0".into());
        }
        self.predictor.validate()?;
        Ok(())
    }
}

/// Forecasts, scenarios and contract for one campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCampaign {
    pub config: CampaignConfig,
    pub demand: DemandSeries,
    pub contract: Vec<f64>,
    pub tariff: ImbalanceTariff,
    /// First simulated period.
    pub start: usize,
    /// Window forecast made at each simulated period.
    pub forecasts: Vec<Vec<f64>>,
    /// Reduced scenario set at each simulated period.
    pub scenarios: Vec<ScenarioSet>,
    pub retrains: Vec<(usize, RetrainOutcome)>,
    /// Realized forecast errors, in observation order.
    pub errors: Vec<PredictionError>,
    /// Lags clamped in the covariance at each period (non-empty only).
    pub clamped: Vec<(usize, Vec<usize>)>,
}

impl PreparedCampaign {
    pub fn end(&self) -> usize {
        self.start + self.forecasts.len()
    }

    /// No-battery cost over the horizon.
    pub fn basic_cost(&self) -> f64 {
        let dm = self.demand.values();
        (self.start..self.end())
            .map(|t| self.tariff.cost(self.contract[t] - dm[t]))
            .sum()
    }
}

/// Build the contract, train the forecaster and precompute every window's
/// forecast and scenario set for `demand` (warm-up days followed by the
/// horizon).
pub fn prepare_campaign(
    config: &CampaignConfig,
    demand: &DemandSeries,
    calendar: &Calendar,
) -> Result<PreparedCampaign, SimError> {
    config.validate()?;
    let per_day = demand.periods_per_day();
    let start = config.warmup_days * per_day;
    let end = start + config.horizon_days * per_day;
    if demand.len() < end {
        return Err(SimError::InvalidConfig(format!(
            "demand covers {} periods, campaign needs {end}",
            demand.len()
        )));
    }
    let dm = demand.values();
    let contract = make_contract(&dm[..end], config.contract_error_frac, config.seed)?;
    let max_sp = contract[start..end].iter().cloned().fold(0.0, f64::max);
    let th = (config.threshold_frac * max_sp).max(1e-6);
    let tariff = ImbalanceTariff::new(th, config.prices.clone(), config.big_m)?;

    let w = config.window;
    let train_len = config.predictor.train_days * per_day;
    let mut predictor = Predictor::train(config.predictor.clone(), demand, calendar, start)?;
    let mut retrains = Vec::new();
    let mut errors = ErrorStats::new(w, 0.0);
    let mut variability = VariabilityStats::default();
    let mut forecasts: Vec<Vec<f64>> = Vec::with_capacity(end - start);
    let mut scenarios = Vec::with_capacity(end - start);
    let mut log = Vec::new();
    let mut clamped = Vec::new();
    for t in start..end {
        if (t - start).is_multiple_of(per_day) {
            if t > start {
                let outcome = predictor.retrain_rolling(demand, calendar, t)?;
                retrains.push((t, outcome));
            }
            let recent = &dm[t - train_len..t];
            errors.set_floor(config.floor_frac * math::mean(recent));
            variability = VariabilityStats::from_series(recent);
        }
        let w_eff = w.min(end - t);
        let mut forecast = predictor.predict_window(demand, calendar, t)?;
        forecast.truncate(w_eff);
        let space = scengen::sample_space(&errors, &variability, config.space_size, scengen::scenario_seed(config.seed, t));
        if !space.clamped_lags.is_empty() {
            clamped.push((t, space.clamped_lags.clone()));
        }
        let rows: Vec<Vec<f64>> = space.perturbations.into_iter().map(|mut r| {
            r.truncate(w_eff);
            r
        }).collect();
        scenarios.push(scengen::reduce(&rows, &forecast, config.scenarios));
        forecasts.push(forecast);
        // observe Dm_t and score every forecast that covered it
        for lag in 0..w {
            if t >= start + lag {
                let predicted = forecasts[t - lag - start][lag];
                errors.update(lag, dm[t], predicted);
                log.push(PredictionError {
                    period: t,
                    lag,
                    actual: dm[t],
                    predicted,
                });
            }
        }
    }
    Ok(PreparedCampaign {
        config: config.clone(),
        demand: demand.clone(),
        contract,
        tariff,
        start,
        forecasts,
        scenarios,
        retrains,
        errors: log,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Reduced scenario set.
    Sswcd,
    /// Baseline forecast only.
    Deterministic,
    /// No dispatch.
    NoBattery,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Sswcd => "sswcd",
            Mode::Deterministic => "deterministic",
            Mode::NoBattery => "nobattery",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub period: usize,
    pub sp: f64,
    pub dm: f64,
    /// Forecast of this period made at this period.
    pub pred: f64,
    pub p: f64,
    /// SOC after the dispatch.
    pub soc: f64,
    pub im: f64,
    pub ic: f64,
    pub cum_ic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub mode: Mode,
    pub battery: BatterySpec,
    pub threshold_kwh: f64,
    pub soc_start: f64,
    pub rows: Vec<TraceRow>,
    pub total_cost: f64,
    pub basic_cost: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
}

impl SimulationTrace {
    /// `100·(basic - total)/basic`; 0 when the basic cost is 0.
    pub fn reduction_pct(&self) -> f64 {
        if self.basic_cost == 0.0 {
            0.0
        } else {
            100.0 * (self.basic_cost - self.total_cost) / self.basic_cost
        }
    }

    pub fn pct_of_basic(&self) -> f64 {
        if self.basic_cost == 0.0 {
            100.0
        } else {
            100.0 * (self.total_cost / self.basic_cost)
        }
    }
}

/// Walk the horizon with the given mode and battery.
pub fn run(prepared: &PreparedCampaign, mode: Mode, battery: &BatterySpec) -> Result<SimulationTrace, SimError> {
    let battery = battery.aggregate();
    battery.validate()?;
    let cfg = &prepared.config;
    let dm = prepared.demand.values();
    let idle = mode == Mode::NoBattery || (battery.power_charge_kw == 0.0 && battery.power_discharge_kw == 0.0);
    let soc_start = (cfg.soc_init_frac * battery.capacity_kwh).clamp(battery.soc_min(), battery.soc_max());
    let mut soc = soc_start;
    let mut rows = Vec::with_capacity(prepared.forecasts.len());
    let mut cum = 0.0;
    let (mut nodes, mut lp_iterations) = (0, 0);
    for (k, forecast) in prepared.forecasts.iter().enumerate() {
        let t = prepared.start + k;
        let p = if idle {
            0.0
        } else {
            let scenarios = match mode {
                Mode::Sswcd => prepared.scenarios[k].clone(),
                _ => ScenarioSet::baseline_only(forecast.clone()),
            };
            let input = WindowInput {
                t,
                contracted: prepared.contract[t..t + forecast.len()].to_vec(),
                scenarios,
                battery,
                soc_now: soc,
                tariff: prepared.tariff.clone(),
                c0: cfg.c0,
                c1: cfg.c1,
            };
            match scheduler::solve_window(&input, &cfg.scheduler) {
                Ok(sw) => {
                    nodes += sw.decision.nodes;
                    lp_iterations += sw.decision.lp_iterations;
                    sw.decision.p_first
                }
                Err(source) => {
                    return Err(SimError::Schedule {
                        t,
                        source,
                        input: Box::new(input),
                    })
                }
            }
        };
        soc = battery.step(soc, p).clamp(battery.soc_min(), battery.soc_max());
        let sp = prepared.contract[t];
        let im = sp - dm[t] - p;
        let ic = prepared.tariff.cost(im);
        cum += ic;
        rows.push(TraceRow {
            period: t,
            sp,
            dm: dm[t],
            pred: forecast[0],
            p,
            soc,
            im,
            ic,
            cum_ic: cum,
        });
    }
    Ok(SimulationTrace {
        mode,
        battery,
        threshold_kwh: prepared.tariff.threshold_kwh(),
        soc_start,
        rows,
        total_cost: cum,
        basic_cost: prepared.basic_cost(),
        nodes,
        lp_iterations,
    })
}

pub fn run_sswcd(prepared: &PreparedCampaign, battery: &BatterySpec) -> Result<SimulationTrace, SimError> {
    run(prepared, Mode::Sswcd, battery)
}

pub fn run_deterministic(prepared: &PreparedCampaign, battery: &BatterySpec) -> Result<SimulationTrace, SimError> {
    run(prepared, Mode::Deterministic, battery)
}

pub fn run_no_battery(prepared: &PreparedCampaign) -> Result<SimulationTrace, SimError> {
    run(prepared, Mode::NoBattery, &BatterySpec::none())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub capacity_kwh: f64,
    pub total_cost: f64,
    pub pct_of_basic: f64,
}

/// Stochastic runs over ascending capacities with 2E batteries.
pub fn capacity_sweep(prepared: &PreparedCampaign, capacities: &[f64]) -> Result<Vec<SweepPoint>, SimError> {
    if capacities.windows(2).any(|w| !(w[0] <= w[1])) || capacities.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(SimError::InvalidConfig("sweep capacities must be finite, >= 0 and ascending".into()));
    }
    capacities
        .iter()
        .map(|&c| {
            let tr = run_sswcd(prepared, &BatterySpec::two_e(c))?;
            Ok(SweepPoint {
                capacity_kwh: c,
                total_cost: tr.total_cost,
                pct_of_basic: tr.pct_of_basic(),
            })
        })
        .collect()
}

/// The synthetic campaign used by the acceptance suite and the `simulate`
/// command when no demand file is given.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCampaign {
    pub fleet: Vec<DemandSeries>,
    pub formation: GroupFormation,
    /// Index of the simulated group.
    pub group: usize,
    pub demand: DemandSeries,
}

pub fn standard_clusters() -> Vec<ClusterSpec> {
    alloc::vec![
        ClusterSpec {
            count: 57,
            base_scale_kwh: 44.0,
            noise_dsd_kwh: 8.0,
        },
        ClusterSpec {
            count: 20,
            base_scale_kwh: 44.0,
            noise_dsd_kwh: 25.0,
        },
    ]
}

pub fn standard_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2013, 1, 1).expect("valid date")
}

/// Generate a fleet, form groups and aggregate group `group`.
pub fn synthetic_campaign(
    clusters: &[ClusterSpec],
    days: usize,
    params: &GroupParams,
    group: usize,
    seed: u64,
) -> Result<SyntheticCampaign, SimError> {
    let fleet = generate_synthetic_fleet(clusters, days, standard_start(), seed)?;
    let formation = form_fleet_groups(&fleet, params, derive_seed(seed, &[stream::GROUPS]))?;
    let g = formation
        .groups
        .get(group)
        .ok_or_else(|| SimError::InvalidConfig(format!("group {group} not formed ({} groups)", formation.groups.len())))?;
    let demand = group_series(&fleet, g, &format!("group{group}"))?;
    Ok(SyntheticCampaign {
        fleet,
        formation,
        group,
        demand,
    })
}

#[cfg(test)]
mod tests;
