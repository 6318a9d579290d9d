//! Short-term demand forecasting with one ε-insensitive support vector
//! regression model per look-ahead lag.
//!
//! The lag-`l` model predicts `Dm_{t+l}` at time `t-1` from the `NP` most
//! recent demands `Dm_{t-1}, …, Dm_{t-NP}` and calendar features of the
//! target period (off-day flag, time of day as sine/cosine, day of week).
//! Features and targets are z-scored on the training rows and an RBF kernel
//! is used. Hyper-parameters come from a grid search with contiguous
//! cross-validation folds.

use alloc::vec;
use alloc::vec::Vec;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Calendar, DemandSeries};

pub const DEFAULT_NP: usize = 48;
pub const DEFAULT_TRAIN_DAYS: usize = 20;
pub const DEFAULT_WINDOW: usize = 8;
pub const DEFAULT_CV_FOLDS: usize = 3;
pub const SMO_TOL: f64 = 1e-3;
pub const SMO_MAX_ITER: usize = 100_000;

const TAU: f64 = 1e-12;
const CALENDAR_FEATURES: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictError {
    #[error("history too short: need {needed} periods, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("need at least {needed} training rows, have {rows}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("no model for lag {0}")]
    MissingModel(usize),
    #[error("invalid predictor setting: {0}")]
    InvalidConfig(&'static str),
}

/// Features of one training or prediction row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    /// `Dm_{i-l-1}, …, Dm_{i-l-NP}`, most recent first.
    pub past_demands: Vec<f64>,
    /// 1 on weekends and holidays.
    pub off_day: f64,
    pub tod_sin: f64,
    pub tod_cos: f64,
    /// Monday = 0 … Sunday = 1.
    pub day_of_week: f64,
}

impl FeatureRow {
    /// Build the row whose target is period `target` of `series`, reading the
    /// `np` demands that end at `last` (inclusive).
    pub fn at(series: &DemandSeries, calendar: &Calendar, target: usize, last: usize, np: usize) -> Self {
        let v = series.values();
        let past_demands = (0..np).map(|k| v[last - k]).collect();
        let ts = series.timestamp(target);
        let per_day = series.periods_per_day() as f64;
        let angle = 2.0 * core::f64::consts::PI * series.period_of_day(target) as f64 / per_day;
        Self {
            past_demands,
            off_day: if calendar.is_off_day(ts.date()) { 1.0 } else { 0.0 },
            tod_sin: math::sin(angle),
            tod_cos: math::cos(angle),
            day_of_week: ts.weekday().num_days_from_monday() as f64 / 6.0,
        }
    }

    pub fn len(&self) -> usize {
        self.past_demands.len() + CALENDAR_FEATURES
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.past_demands);
        out.extend_from_slice(&[self.off_day, self.tod_sin, self.tod_cos, self.day_of_week]);
        out
    }
}

/// Training rows for lag `lag` with targets `Dm_i`, `i = end-th .. end-1`.
///
/// Returned oldest row first.
pub fn build_training_set(
    history: &DemandSeries,
    calendar: &Calendar,
    lag: usize,
    np: usize,
    th: usize,
    end: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), PredictError> {
    if np == 0 || th == 0 {
        return Err(PredictError::InvalidConfig("NP and TH must be positive"));
    }
    let needed = th + lag + np;
    if end > history.len() || end < needed {
        return Err(PredictError::InsufficientHistory {
            needed,
            available: end.min(history.len()),
        });
    }
    let v = history.values();
    let mut features = Vec::with_capacity(th);
    let mut targets = Vec::with_capacity(th);
    for i in end - th..end {
        features.push(FeatureRow::at(history, calendar, i, i - lag - 1, np).to_vec());
        targets.push(v[i]);
    }
    Ok((features, targets))
}

#[inline]
pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    math::exp(-gamma * sq_dist(a, b))
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One point of the hyper-parameter grid; `gamma` is absolute and `epsilon`
/// is in units of the target standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

/// Candidate values. `gamma_scale` is divided by the feature count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrGrid {
    pub c: Vec<f64>,
    pub gamma_scale: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl Default for SvrGrid {
    fn default() -> Self {
        Self {
            c: vec![1.0, 10.0, 100.0],
            gamma_scale: vec![0.01, 0.1, 1.0],
            epsilon: vec![0.005, 0.01, 0.02],
        }
    }
}

impl SvrGrid {
    pub fn single(p: SvrParams, features: usize) -> Self {
        Self {
            c: vec![p.c],
            gamma_scale: vec![p.gamma * features as f64],
            epsilon: vec![p.epsilon],
        }
    }

    fn validate(&self) -> Result<(), PredictError> {
        if self.c.is_empty() || self.gamma_scale.is_empty() || self.epsilon.is_empty() {
            return Err(PredictError::InvalidConfig("empty hyper-parameter grid"));
        }
        let pos = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !pos(&self.c) || !pos(&self.gamma_scale) || !self.epsilon.iter().all(|e| e.is_finite() && *e >= 0.0) {
            return Err(PredictError::InvalidConfig("grid values must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = math::sqrt(v / n);
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Trained ε-SVR model for one lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub lag: usize,
    pub params: SvrParams,
    features: Standardizer,
    target_mean: f64,
    target_scale: f64,
    /// Standardized support vectors.
    support: Vec<Vec<f64>>,
    /// `α_i - α*_i` for each support vector (standardized target units).
    coef: Vec<f64>,
    rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SvrModel {
    pub fn dual_coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn support_count(&self) -> usize {
        self.support.len()
    }

    /// Bias in original units.
    pub fn bias(&self) -> f64 {
        self.target_mean - self.target_scale * self.rho
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let z = self.features.apply(x);
        self.predict_standardized(&z)
    }

    fn predict_standardized(&self, z: &[f64]) -> f64 {
        let f: f64 = self
            .support
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * rbf(self.params.gamma, sv, z))
            .sum::<f64>()
            - self.rho;
        self.target_mean + self.target_scale * f
    }
}

struct Dual {
    coef: Vec<f64>,
    rho: f64,
    iterations: usize,
    converged: bool,
}

/// ε-SVR dual by sequential minimal optimization with second-order working
/// set selection. `k` is the dense `n×n` kernel matrix. Variable `t < n` is
/// `α_t` (label +1) and `t + n` is `α*_t` (label -1).
fn smo(k: &[f64], n: usize, z: &[f64], c: f64, eps: f64) -> Dual {
    let l = 2 * n;
    let y = |t: usize| if t < n { 1.0 } else { -1.0 };
    let diag: Vec<f64> = (0..n).map(|t| k[t * n + t]).collect();
    let mut alpha = vec![0.0; l];
    let mut g: Vec<f64> = (0..l).map(|t| if t < n { eps - z[t] } else { eps + z[t - n] }).collect();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < SMO_MAX_ITER {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if !upper(alpha[t]) && -g[t] >= gmax {
                gmax = -g[t];
                i = t;
            }
        }
        for t in n..l {
            if !lower(alpha[t]) && g[t] >= gmax {
                gmax = g[t];
                i = t;
            }
        }
        if i == usize::MAX {
            converged = true;
            break;
        }
        let ii = i % n;
        let row_i = &k[ii * n..(ii + 1) * n];
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let quad = diag[ii] + diag[t] - 2.0 * row_i[t];
            let quad = if quad > 0.0 { quad } else { TAU };
            if !lower(alpha[t]) {
                let yg = g[t];
                gmax2 = gmax2.max(yg);
                let diff = gmax + yg;
                if diff > 0.0 {
                    let obj = -(diff * diff) / quad;
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
            if !upper(alpha[t + n]) {
                let yg = -g[t + n];
                gmax2 = gmax2.max(yg);
                let diff = gmax + yg;
                if diff > 0.0 {
                    let obj = -(diff * diff) / quad;
                    if obj <= best {
                        best = obj;
                        j = t + n;
                    }
                }
            }
        }
        if j == usize::MAX || gmax + gmax2 < SMO_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let jj = j % n;
        let (yi, yj) = (y(i), y(j));
        let kij = row_i[jj];
        let (ai, aj) = (alpha[i], alpha[j]);
        if yi != yj {
            let mut quad = diag[ii] + diag[jj] - 2.0 * kij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-g[i] - g[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = diag[ii] + diag[jj] - 2.0 * kij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (g[i] - g[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (yi * (alpha[i] - ai), yj * (alpha[j] - aj));
        let row_j = &k[jj * n..(jj + 1) * n];
        let (gp, gm) = g.split_at_mut(n);
        for t in 0..n {
            let d = row_i[t] * di + row_j[t] * dj;
            gp[t] += d;
            gm[t] -= d;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut nfree, mut sum_free) = (0usize, 0.0);
    for t in 0..l {
        let yg = y(t) * g[t];
        if upper(alpha[t]) {
            if y(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            nfree += 1;
            sum_free += yg;
        }
    }
    let rho = if nfree > 0 { sum_free / nfree as f64 } else { (ub + lb) / 2.0 };
    let coef = (0..n).map(|t| alpha[t] - alpha[t + n]).collect();
    Dual {
        coef,
        rho,
        iterations,
        converged,
    }
}

struct Prepared {
    std: Standardizer,
    z: Vec<Vec<f64>>,
    dist: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
    zt: Vec<f64>,
}

fn prepare(features: &[Vec<f64>], targets: &[f64]) -> Prepared {
    let std = Standardizer::fit(features);
    let z: Vec<Vec<f64>> = features.iter().map(|r| std.apply(r)).collect();
    let n = z.len();
    let mut dist = vec![0.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let d = sq_dist(&z[a], &z[b]);
            dist[a * n + b] = d;
            dist[b * n + a] = d;
        }
    }
    let tm = targets.iter().sum::<f64>() / n as f64;
    let var = targets.iter().map(|t| (t - tm) * (t - tm)).sum::<f64>() / n as f64;
    let ts = math::sqrt(var);
    let target_scale = if ts > 1e-12 * (1.0 + tm.abs()) { ts } else { 0.0 };
    let zt = targets
        .iter()
        .map(|t| if target_scale > 0.0 { (t - tm) / target_scale } else { 0.0 })
        .collect();
    Prepared {
        std,
        z,
        dist,
        target_mean: tm,
        target_scale,
        zt,
    }
}

fn kernel_subset(dist: &[f64], n_full: usize, idx: &[usize], gamma: f64) -> Vec<f64> {
    let n = idx.len();
    let mut k = vec![0.0; n * n];
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate() {
            k[a * n + b] = math::exp(-gamma * dist[ia * n_full + ib]);
        }
    }
    k
}

fn fit_prepared(p: &Prepared, lag: usize, params: SvrParams) -> SvrModel {
    let n = p.z.len();
    if p.target_scale == 0.0 {
        return SvrModel {
            lag,
            params,
            features: p.std.clone(),
            target_mean: p.target_mean,
            target_scale: 1.0,
            support: Vec::new(),
            coef: Vec::new(),
            rho: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let idx: Vec<usize> = (0..n).collect();
    let k = kernel_subset(&p.dist, n, &idx, params.gamma);
    let dual = smo(&k, n, &p.zt, params.c, params.epsilon);
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for (t, &cf) in dual.coef.iter().enumerate() {
        if cf != 0.0 {
            support.push(p.z[t].clone());
            coef.push(cf);
        }
    }
    SvrModel {
        lag,
        params,
        features: p.std.clone(),
        target_mean: p.target_mean,
        target_scale: p.target_scale,
        support,
        coef,
        rho: dual.rho,
        iterations: dual.iterations,
        converged: dual.converged,
    }
}

fn check_rows(features: &[Vec<f64>], targets: &[f64], needed: usize) -> Result<(), PredictError> {
    if features.len() != targets.len() {
        return Err(PredictError::InvalidConfig("feature and target counts differ"));
    }
    if features.len() < needed.max(1) {
        return Err(PredictError::TooFewRows {
            rows: features.len(),
            needed: needed.max(1),
        });
    }
    let d = features[0].len();
    if d == 0 || features.iter().any(|r| r.len() != d) {
        return Err(PredictError::InvalidConfig("feature rows must share a positive length"));
    }
    if features.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(PredictError::InvalidConfig("features and targets must be finite"));
    }
    Ok(())
}

/// Train with fixed hyper-parameters.
pub fn fit_svr(features: &[Vec<f64>], targets: &[f64], lag: usize, params: SvrParams) -> Result<SvrModel, PredictError> {
    check_rows(features, targets, 1)?;
    if !(params.c > 0.0 && params.gamma > 0.0 && params.epsilon >= 0.0) {
        return Err(PredictError::InvalidConfig("C and gamma must be positive, epsilon non-negative"));
    }
    Ok(fit_prepared(&prepare(features, targets), lag, params))
}

/// Grid search with `folds` contiguous cross-validation blocks, then a final
/// fit on all rows with the point of lowest mean validation MAE (first grid
/// point on ties, in `C`, `γ`, `ε` order).
pub fn train_svr(
    features: &[Vec<f64>],
    targets: &[f64],
    lag: usize,
    grid: &SvrGrid,
    folds: usize,
) -> Result<SvrModel, PredictError> {
    grid.validate()?;
    if folds < 2 {
        return Err(PredictError::InvalidConfig("need at least two folds"));
    }
    check_rows(features, targets, 2 * folds)?;
    let p = prepare(features, targets);
    let n = p.z.len();
    let d = features[0].len() as f64;
    let mut best: Option<(f64, SvrParams)> = None;
    if p.target_scale > 0.0 && grid.c.len() * grid.gamma_scale.len() * grid.epsilon.len() > 1 {
        for &c in &grid.c {
            for &gs in &grid.gamma_scale {
                let gamma = gs / d;
                for &epsilon in &grid.epsilon {
                    let mut mae = 0.0;
                    for f in 0..folds {
                        let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
                        let train: Vec<usize> = (0..lo).chain(hi..n).collect();
                        let k = kernel_subset(&p.dist, n, &train, gamma);
                        let zt: Vec<f64> = train.iter().map(|&t| p.zt[t]).collect();
                        let dual = smo(&k, train.len(), &zt, c, epsilon);
                        let mut err = 0.0;
                        for v in lo..hi {
                            let f: f64 = train
                                .iter()
                                .zip(&dual.coef)
                                .filter(|(_, cf)| **cf != 0.0)
                                .map(|(&t, cf)| cf * math::exp(-gamma * p.dist[t * n + v]))
                                .sum::<f64>()
                                - dual.rho;
                            err += (f - p.zt[v]).abs();
                        }
                        mae += err / (hi - lo) as f64;
                    }
                    mae /= folds as f64;
                    if best.is_none_or(|(m, _)| mae < m) {
                        best = Some((mae, SvrParams { c, gamma, epsilon }));
                    }
                }
            }
        }
    }
    let params = best.map(|b| b.1).unwrap_or(SvrParams {
        c: grid.c[0],
        gamma: grid.gamma_scale[0] / d,
        epsilon: grid.epsilon[0],
    });
    Ok(fit_prepared(&p, lag, params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// Number of lags (the scheduling window `w`).
    pub window: usize,
    /// Past demands per feature row.
    pub np: usize,
    /// Days of history per training window.
    pub train_days: usize,
    pub grid: SvrGrid,
    pub cv_folds: usize,
    /// Repeat the grid search at every retrain instead of only the first.
    pub regrid: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            np: DEFAULT_NP,
            train_days: DEFAULT_TRAIN_DAYS,
            grid: SvrGrid::default(),
            cv_folds: DEFAULT_CV_FOLDS,
            regrid: false,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), PredictError> {
        if self.window == 0 || self.np == 0 || self.train_days == 0 {
            return Err(PredictError::InvalidConfig("window, NP and training days must be positive"));
        }
        self.grid.validate()
    }
}

/// Result of a rolling retrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RetrainOutcome {
    Retrained { first_day: usize, last_day: usize },
    /// Not enough history; the previous models stay in place.
    KeptPrevious { needed_days: usize, available_days: usize },
}

/// The per-lag models of one balancing group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    config: PredictorConfig,
    models: Vec<SvrModel>,
}

impl Predictor {
    /// Train all lags on the `train_days` days ending before period `end`
    /// (a day boundary). Rows whose lagged demands would reach before the
    /// start of `history` are dropped.
    pub fn train(
        config: PredictorConfig,
        history: &DemandSeries,
        calendar: &Calendar,
        end: usize,
    ) -> Result<Self, PredictError> {
        config.validate()?;
        let mut p = Self {
            config,
            models: Vec::new(),
        };
        p.fit_all(history, calendar, end, true)?;
        Ok(p)
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn models(&self) -> &[SvrModel] {
        &self.models
    }

    fn fit_all(&mut self, history: &DemandSeries, calendar: &Calendar, end: usize, search: bool) -> Result<(), PredictError> {
        let per_day = history.periods_per_day();
        let th = self.config.train_days * per_day;
        if end > history.len() || end < th {
            return Err(PredictError::InsufficientHistory {
                needed: th,
                available: end.min(history.len()),
            });
        }
        let mut models = Vec::with_capacity(self.config.window);
        for lag in 0..self.config.window {
            let reach = lag + self.config.np;
            let rows = th.min(end.saturating_sub(reach));
            let (x, y) = build_training_set(history, calendar, lag, self.config.np, rows, end)?;
            let model = if search || self.config.regrid || self.models.len() <= lag {
                train_svr(&x, &y, lag, &self.config.grid, self.config.cv_folds)?
            } else {
                fit_svr(&x, &y, lag, self.models[lag].params)?
            };
            models.push(model);
        }
        self.models = models;
        Ok(())
    }

    /// Retrain for the day starting at period `day_start` on the preceding
    /// `train_days` days. Days are counted from 1 at the start of `history`.
    pub fn retrain_rolling(
        &mut self,
        history: &DemandSeries,
        calendar: &Calendar,
        day_start: usize,
    ) -> Result<RetrainOutcome, PredictError> {
        let per_day = history.periods_per_day();
        let available_days = day_start.min(history.len()) / per_day;
        if available_days < self.config.train_days {
            return Ok(RetrainOutcome::KeptPrevious {
                needed_days: self.config.train_days,
                available_days,
            });
        }
        self.fit_all(history, calendar, day_start, false)?;
        Ok(RetrainOutcome::Retrained {
            first_day: available_days - self.config.train_days + 1,
            last_day: available_days,
        })
    }

    /// Forecast `Dm_t … Dm_{t+w-1}` from demands before `t`. Only the
    /// timestamps (not the values) of periods `t..` are read.
    pub fn predict_window(&self, history: &DemandSeries, calendar: &Calendar, t: usize) -> Result<Vec<f64>, PredictError> {
        let w = self.config.window;
        let np = self.config.np;
        if t < np || t > history.len() {
            return Err(PredictError::InsufficientHistory {
                needed: np,
                available: t.min(history.len()),
            });
        }
        (0..w)
            .map(|lag| {
                let model = self.models.get(lag).ok_or(PredictError::MissingModel(lag))?;
                let row = FeatureRow::at(history, calendar, t + lag, t - 1, np).to_vec();
                Ok(model.predict(&row).max(0.0))
            })
            .collect()
    }
}

/// One forecast error observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionError {
    pub period: usize,
    pub lag: usize,
    pub actual: f64,
    pub predicted: f64,
}

impl PredictionError {
    /// `actual - predicted`.
    pub fn error(&self) -> f64 {
        self.actual - self.predicted
    }
}
