//! Plain-text `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use imbal_core::groupform::GroupParams;
use imbal_core::simulator::{standard_clusters, standard_start, CampaignConfig, ClusterSpec};
use imbal_core::BatterySpec;

/// Where a configuration value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Override => write!(f, "--set"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}: {msg}")]
    Syntax { origin: Origin, msg: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: key `{key}`: {msg}")]
    BadValue { origin: Origin, key: String, msg: String },
    #[error("{}: {msg}", path.display())]
    Read { path: PathBuf, msg: String },
    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),
}

/// Battery size: the simulated group's capacity bound or a fixed rating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Capacity {
    GroupBound,
    Kwh(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryConfig {
    pub capacity: Capacity,
    /// Charge and discharge power per kWh of capacity.
    pub power_ratio: f64,
    pub soc_min_frac: f64,
    pub soc_max_frac: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub unit_count: u32,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        let r = BatterySpec::two_e(1.0);
        Self {
            capacity: Capacity::GroupBound,
            power_ratio: 2.0,
            soc_min_frac: r.soc_min_frac,
            soc_max_frac: r.soc_max_frac,
            eta_charge: r.eta_charge,
            eta_discharge: r.eta_discharge,
            unit_count: 1,
        }
    }
}

impl BatteryConfig {
    /// Aggregated spec for a per-unit capacity of `capacity_kwh`.
    pub fn spec(&self, capacity_kwh: f64) -> BatterySpec {
        BatterySpec {
            capacity_kwh,
            power_charge_kw: self.power_ratio * capacity_kwh,
            power_discharge_kw: self.power_ratio * capacity_kwh,
            soc_min_frac: self.soc_min_frac,
            soc_max_frac: self.soc_max_frac,
            eta_charge: self.eta_charge,
            eta_discharge: self.eta_discharge,
            unit_count: self.unit_count,
        }
        .aggregate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Demand file; the synthetic fleet is used when absent.
    pub demand_csv: Option<PathBuf>,
    pub holidays: Option<PathBuf>,
    pub clusters: Vec<ClusterSpec>,
    pub fleet_days: usize,
    pub fleet_start: NaiveDate,
    pub groups: GroupParams,
    /// Group simulated by `simulate` (0 = lowest criterion).
    pub group_index: usize,
    pub battery: BatteryConfig,
    pub campaign: CampaignConfig,
    /// Absolute sweep capacities; overrides `sweep_pct_of_bound` when set.
    pub sweep_kwh: Option<Vec<f64>>,
    pub sweep_pct_of_bound: Vec<f64>,
    /// Record wall-clock time in summaries (breaks byte-identical reruns).
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let campaign = CampaignConfig::default();
        Self {
            seed: 0,
            demand_csv: None,
            holidays: None,
            clusters: standard_clusters(),
            fleet_days: campaign.warmup_days + campaign.horizon_days,
            fleet_start: standard_start(),
            groups: GroupParams::default(),
            group_index: 0,
            battery: BatteryConfig::default(),
            campaign,
            sweep_kwh: None,
            sweep_pct_of_bound: vec![0.0, 25.0, 50.0, 100.0, 200.0],
            timing: false,
        }
    }
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "seed",
    "data.demand_csv",
    "data.holidays",
    "fleet.clusters",
    "fleet.days",
    "fleet.start",
    "groups.beta",
    "groups.threshold",
    "groups.min_group_size",
    "groups.index",
    "mcmc.iterations",
    "mcmc.burn_in_frac",
    "battery.capacity_kwh",
    "battery.power_ratio",
    "battery.soc_min_frac",
    "battery.soc_max_frac",
    "battery.eta_charge",
    "battery.eta_discharge",
    "battery.unit_count",
    "tariff.prices",
    "tariff.big_m",
    "tariff.threshold_frac",
    "campaign.warmup_days",
    "campaign.horizon_days",
    "campaign.window",
    "campaign.contract_error",
    "campaign.soc_init_frac",
    "scenarios.space",
    "scenarios.count",
    "scenarios.floor_frac",
    "svr.np",
    "svr.train_days",
    "svr.c",
    "svr.gamma_scale",
    "svr.epsilon",
    "svr.cv_folds",
    "svr.regrid",
    "scheduler.c0",
    "scheduler.c1",
    "scheduler.relax_segments",
    "scheduler.node_limit",
    "scheduler.gap",
    "sweep.capacities_kwh",
    "sweep.pct_of_bound",
    "output.timing",
];

fn num(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if !x.is_finite() {
        return Err(format!("`{v}` is not finite"));
    }
    Ok(x)
}

fn int(v: &str) -> Result<usize, String> {
    v.parse().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn in_range(x: f64, lo: f64, hi: f64, lo_open: bool) -> Result<f64, String> {
    let ok = if lo_open { x > lo } else { x >= lo } && x <= hi;
    if ok {
        Ok(x)
    } else {
        let l = if lo_open { '(' } else { '[' };
        Err(format!("{x} outside {l}{lo}, {hi}]"))
    }
}

fn positive(v: &str) -> Result<f64, String> {
    in_range(num(v)?, 0.0, f64::MAX, true)
}

fn non_negative(v: &str) -> Result<f64, String> {
    in_range(num(v)?, 0.0, f64::MAX, false)
}

fn fraction(v: &str) -> Result<f64, String> {
    in_range(num(v)?, 0.0, 1.0, false)
}

fn int_at_least(v: &str, lo: usize) -> Result<usize, String> {
    let n = int(v)?;
    if n < lo {
        return Err(format!("{n} must be >= {lo}"));
    }
    Ok(n)
}

fn list(v: &str, each: fn(&str) -> Result<f64, String>) -> Result<Vec<f64>, String> {
    let items: Vec<f64> = v
        .split(',')
        .map(|s| each(s.trim()))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean")),
    }
}

fn ascending(xs: &[f64]) -> Result<(), String> {
    if xs.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err("values must be strictly ascending".into())
    }
}

/// `count:base_scale_kwh:noise_dsd_kwh` blocks separated by commas.
pub fn parse_clusters(v: &str) -> Result<Vec<ClusterSpec>, String> {
    let mut out = Vec::new();
    for block in v.split(',') {
        let parts: Vec<&str> = block.trim().split(':').collect();
        if parts.len() != 3 {
            return Err(format!("cluster `{block}` is not count:scale:noise"));
        }
        out.push(ClusterSpec {
            count: int_at_least(parts[0], 1)?,
            base_scale_kwh: positive(parts[1])?,
            noise_dsd_kwh: non_negative(parts[2])?,
        });
    }
    Ok(out)
}

impl RunConfig {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SetError> {
        let v = value.trim();
        let bad = |m: String| SetError::BadValue(m);
        let c = &mut self.campaign;
        match key {
            "seed" => self.seed = v.parse().map_err(|_| bad(format!("`{v}` is not a u64")))?,
            "data.demand_csv" => self.demand_csv = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "data.holidays" => self.holidays = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "fleet.clusters" => self.clusters = parse_clusters(v).map_err(bad)?,
            "fleet.days" => self.fleet_days = int_at_least(v, 1).map_err(bad)?,
            "fleet.start" => {
                self.fleet_start = NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| bad(format!("`{v}` is not a YYYY-MM-DD date")))?
            }
            "groups.beta" => self.groups.beta = positive(v).map_err(bad)?,
            "groups.threshold" => self.groups.threshold = positive(v).map_err(bad)?,
            "groups.min_group_size" => self.groups.min_group_size = int_at_least(v, 2).map_err(bad)?,
            "groups.index" => self.group_index = int(v).map_err(bad)?,
            "mcmc.iterations" => self.groups.mcmc.iterations = int_at_least(v, 1).map_err(bad)?,
            "mcmc.burn_in_frac" => {
                let x = num(v).map_err(bad)?;
                if !(0.0..1.0).contains(&x) {
                    return Err(bad(format!("{x} outside [0, 1)")));
                }
                self.groups.mcmc.burn_in_frac = x;
            }
            "battery.capacity_kwh" => {
                self.battery.capacity = if v == "auto" {
                    Capacity::GroupBound
                } else {
                    Capacity::Kwh(non_negative(v).map_err(bad)?)
                }
            }
            "battery.power_ratio" => self.battery.power_ratio = non_negative(v).map_err(bad)?,
            "battery.soc_min_frac" => self.battery.soc_min_frac = fraction(v).map_err(bad)?,
            "battery.soc_max_frac" => self.battery.soc_max_frac = fraction(v).map_err(bad)?,
            "battery.eta_charge" => self.battery.eta_charge = in_range(num(v).map_err(bad)?, 0.0, 1.0, true).map_err(bad)?,
            "battery.eta_discharge" => self.battery.eta_discharge = in_range(num(v).map_err(bad)?, 0.0, 1.0, true).map_err(bad)?,
            "battery.unit_count" => {
                let n = int_at_least(v, 1).map_err(bad)?;
                self.battery.unit_count = u32::try_from(n).map_err(|_| bad(format!("{n} too large")))?;
            }
            "tariff.prices" => {
                let p = list(v, num).map_err(bad)?;
                if p.len() != 4 {
                    return Err(bad(format!("expected 4 prices, got {}", p.len())));
                }
                if !p.windows(2).all(|w| w[0] >= w[1]) {
                    return Err(bad("prices must be non-increasing".into()));
                }
                c.prices = p;
            }
            "tariff.big_m" => c.big_m = positive(v).map_err(bad)?,
            "tariff.threshold_frac" => c.threshold_frac = in_range(num(v).map_err(bad)?, 0.0, 1.0, true).map_err(bad)?,
            "campaign.warmup_days" => c.warmup_days = int_at_least(v, 1).map_err(bad)?,
            "campaign.horizon_days" => c.horizon_days = int_at_least(v, 1).map_err(bad)?,
            "campaign.window" => {
                let w = int_at_least(v, 1).map_err(bad)?;
                if w > 48 {
                    return Err(bad(format!("{w} must be <= 48")));
                }
                c.window = w;
                c.predictor.window = w;
            }
            "campaign.contract_error" => c.contract_error_frac = non_negative(v).map_err(bad)?,
            "campaign.soc_init_frac" => c.soc_init_frac = fraction(v).map_err(bad)?,
            "scenarios.space" => c.space_size = int_at_least(v, 1).map_err(bad)?,
            "scenarios.count" => c.scenarios = int_at_least(v, 1).map_err(bad)?,
            "scenarios.floor_frac" => c.floor_frac = non_negative(v).map_err(bad)?,
            "svr.np" => c.predictor.np = int_at_least(v, 1).map_err(bad)?,
            "svr.train_days" => c.predictor.train_days = int_at_least(v, 1).map_err(bad)?,
            "svr.c" => c.predictor.grid.c = list(v, positive).map_err(bad)?,
            "svr.gamma_scale" => c.predictor.grid.gamma_scale = list(v, positive).map_err(bad)?,
            "svr.epsilon" => c.predictor.grid.epsilon = list(v, non_negative).map_err(bad)?,
            "svr.cv_folds" => c.predictor.cv_folds = int_at_least(v, 2).map_err(bad)?,
            "svr.regrid" => c.predictor.regrid = boolean(v).map_err(bad)?,
            "scheduler.c0" => c.c0 = non_negative(v).map_err(bad)?,
            "scheduler.c1" => c.c1 = non_negative(v).map_err(bad)?,
            "scheduler.relax_segments" => c.scheduler.relax_segment_binaries = boolean(v).map_err(bad)?,
            "scheduler.node_limit" => c.scheduler.bnb.node_limit = int_at_least(v, 1).map_err(bad)?,
            "scheduler.gap" => c.scheduler.bnb.gap_tol = in_range(num(v).map_err(bad)?, 0.0, 1.0, false).map_err(bad)?,
            "sweep.capacities_kwh" => {
                let xs = list(v, non_negative).map_err(bad)?;
                ascending(&xs).map_err(bad)?;
                self.sweep_kwh = Some(xs);
            }
            "sweep.pct_of_bound" => {
                let xs = list(v, non_negative).map_err(bad)?;
                ascending(&xs).map_err(bad)?;
                self.sweep_pct_of_bound = xs;
            }
            "output.timing" => self.timing = boolean(v).map_err(bad)?,
            _ => return Err(SetError::UnknownKey),
        }
        Ok(())
    }

    /// Apply every assignment in `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = Origin::File {
                path: path.to_path_buf(),
                line: n + 1,
            };
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    origin,
                    msg: format!("expected key = value, got `{line}`"),
                });
            };
            self.apply(k.trim(), v, origin)?;
        }
        Ok(())
    }

    /// Apply a `--set key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((k, v)) = assignment.split_once('=') else {
            return Err(ConfigError::Syntax {
                origin: Origin::Override,
                msg: format!("expected key=value, got `{assignment}`"),
            });
        };
        self.apply(k.trim(), v, Origin::Override)
    }

    fn apply(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        self.set(key, value).map_err(|e| match e {
            SetError::UnknownKey => ConfigError::UnknownKey {
                origin,
                key: key.to_string(),
            },
            SetError::BadValue(msg) => ConfigError::BadValue {
                origin,
                key: key.to_string(),
                msg,
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Cross-key checks that single assignments cannot catch.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Inconsistent(m));
        if self.battery.soc_min_frac >= self.battery.soc_max_frac {
            return bad("battery.soc_min_frac must be below battery.soc_max_frac".into());
        }
        if self.groups.mcmc.retained() == 0 {
            return bad("mcmc.burn_in_frac leaves no retained draws".into());
        }
        let mut c = self.campaign.clone();
        c.seed = self.seed;
        c.validate().map_err(|e| ConfigError::Inconsistent(e.to_string()))?;
        Ok(())
    }

    /// Campaign settings with the run seed applied.
    pub fn campaign(&self) -> CampaignConfig {
        CampaignConfig {
            seed: self.seed,
            ..self.campaign.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetError {
    UnknownKey,
    BadValue(String),
}
