//! Scenario generation for the window optimizer.
//!
//! Per-lag prediction errors and the preceding-period variability are
//! modelled as a bivariate Gaussian. A large seeded space of perturbations is
//! drawn and reduced to a handful of representatives by stratifying on the
//! sum of squared distance from the baseline forecast.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng::{derive_seed, rng_from, stream};

pub const DEFAULT_SPACE_SIZE: usize = 5000;
pub const DEFAULT_FLOOR_FRAC: f64 = 0.05;

/// Running mean/variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation (0 for fewer than two samples).
    pub fn std(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            math::sqrt((self.m2 / self.count as f64).max(0.0))
        }
    }
}

/// Per-lag statistics of realized prediction errors `actual - predicted`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    lags: Vec<Welford>,
    sigma_floor: f64,
}

impl ErrorStats {
    pub fn new(window: usize, sigma_floor: f64) -> Self {
        Self {
            lags: vec![Welford::default(); window],
            sigma_floor: sigma_floor.max(0.0),
        }
    }

    pub fn window(&self) -> usize {
        self.lags.len()
    }

    pub fn set_floor(&mut self, sigma_floor: f64) {
        self.sigma_floor = sigma_floor.max(0.0);
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn update(&mut self, lag: usize, actual: f64, predicted: f64) {
        self.lags[lag].push(actual - predicted);
    }

    pub fn count(&self, lag: usize) -> u64 {
        self.lags[lag].count()
    }

    /// Mean error; 0 until a first error is seen.
    pub fn mean(&self, lag: usize) -> f64 {
        self.lags[lag].mean()
    }

    /// Population std of the errors, or the prior floor while fewer than two
    /// errors have been observed.
    pub fn std(&self, lag: usize) -> f64 {
        let w = &self.lags[lag];
        if w.count() < 2 {
            self.sigma_floor
        } else {
            w.std()
        }
    }
}

/// Mean and population std of first differences `Dm_t - Dm_{t-1}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VariabilityStats {
    pub mean: f64,
    pub std: f64,
}

impl VariabilityStats {
    pub fn from_series(values: &[f64]) -> Self {
        let mut w = Welford::default();
        for pair in values.windows(2) {
            w.push(pair[1] - pair[0]);
        }
        Self {
            mean: w.mean(),
            std: w.std(),
        }
    }
}

/// `[[σl², σp²], [σp², σl²]]`, with the off-diagonal clamped to `0.999 σl²`
/// when `σp > σl` would make it indefinite. The flag reports the clamp.
pub fn build_covariance(sigma_l: f64, sigma_p: f64) -> ([[f64; 2]; 2], bool) {
    let diag = sigma_l * sigma_l;
    let mut off = sigma_p * sigma_p;
    let clamped = sigma_p > sigma_l;
    if clamped {
        off = 0.999 * diag;
    }
    ([[diag, off], [off, diag]], clamped)
}

/// Lower Cholesky factor of a 2×2 PSD matrix.
pub fn cholesky2(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let a = m[0][0];
    if a < 0.0 {
        return None;
    }
    let l11 = math::sqrt(a);
    let l21 = if l11 > 0.0 { m[1][0] / l11 } else { 0.0 };
    if l11 == 0.0 && m[1][0] != 0.0 {
        return None;
    }
    let rest = m[1][1] - l21 * l21;
    if rest < -1e-12 * (1.0 + m[1][1].abs()) {
        return None;
    }
    Some([[l11, 0.0], [l21, math::sqrt(rest.max(0.0))]])
}

/// Outcome of drawing a scenario space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpace {
    /// `n_space × w` matrix of perturbations (kWh).
    pub perturbations: Vec<Vec<f64>>,
    /// Lags whose covariance needed the off-diagonal clamp.
    pub clamped_lags: Vec<usize>,
}

/// Seed of the scenario draw for period `t` of a campaign.
pub fn scenario_seed(master: u64, t: usize) -> u64 {
    derive_seed(master, &[stream::SCENARIOS, t as u64])
}

/// Draw `n_space` perturbation vectors of length `errors.window()`.
///
/// For each scenario and lag a 2-vector `(e, v)` is drawn from
/// `N((μ_l, μ_p), Σ_l)` via the Cholesky factor of [`build_covariance`]; the
/// perturbation is the error component `e`. Lags are drawn independently.
pub fn sample_space(
    errors: &ErrorStats,
    variability: &VariabilityStats,
    n_space: usize,
    seed: u64,
) -> ScenarioSpace {
    let w = errors.window();
    let mut factors = Vec::with_capacity(w);
    let mut clamped_lags = Vec::new();
    for l in 0..w {
        let (cov, clamped) = build_covariance(errors.std(l), variability.std);
        if clamped {
            clamped_lags.push(l);
        }
        let chol = cholesky2(cov).unwrap_or([[math::sqrt(cov[0][0].max(0.0)), 0.0], [0.0, 0.0]]);
        factors.push(chol);
    }
    let mut rng = rng_from(seed);
    let mut perturbations = Vec::with_capacity(n_space);
    for _ in 0..n_space {
        let mut row = Vec::with_capacity(w);
        for (l, f) in factors.iter().enumerate() {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let e = errors.mean(l) + f[0][0] * z1;
            let _v = variability.mean + f[1][0] * z1 + f[1][1] * z2;
            row.push(e);
        }
        perturbations.push(row);
    }
    ScenarioSpace {
        perturbations,
        clamped_lags,
    }
}

/// Reduced, equiprobable scenario set around a baseline forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    baseline: Vec<f64>,
    perturbations: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
}

impl ScenarioSet {
    /// The single zero-perturbation scenario.
    pub fn baseline_only(baseline: Vec<f64>) -> Self {
        let w = baseline.len();
        Self {
            baseline,
            perturbations: vec![vec![0.0; w]],
            probabilities: vec![1.0],
        }
    }

    /// Equiprobable set from explicit perturbations.
    pub fn from_perturbations(baseline: Vec<f64>, perturbations: Vec<Vec<f64>>) -> Self {
        let n = perturbations.len();
        Self {
            baseline,
            perturbations,
            probabilities: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.perturbations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perturbations.is_empty()
    }

    pub fn window(&self) -> usize {
        self.baseline.len()
    }

    pub fn baseline(&self) -> &[f64] {
        &self.baseline
    }

    pub fn perturbations(&self) -> &[Vec<f64>] {
        &self.perturbations
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, s: usize) -> f64 {
        self.probabilities[s]
    }

    /// Perturbed demand of scenario `s` at lag `l`, clamped at 0.
    pub fn demand(&self, s: usize, l: usize) -> f64 {
        (self.baseline[l] + self.perturbations[s][l]).max(0.0)
    }
}

/// Sum of squared perturbations of each scenario.
pub fn ssd(perturbations: &[Vec<f64>]) -> Vec<f64> {
    perturbations
        .iter()
        .map(|row| row.iter().map(|d| d * d).sum())
        .collect()
}

/// Rank positions selected from a space of `n` sorted scenarios:
/// `floor((j + 0.5) / target · (n - 1))`, moving duplicates to the next
/// unused rank.
pub fn stratified_ranks(n: usize, target: usize) -> Vec<usize> {
    let mut used = vec![false; n];
    let mut out = Vec::with_capacity(target);
    for j in 0..target {
        let q = (j as f64 + 0.5) / target as f64 * (n - 1) as f64;
        let mut r = (math::floor(q) as usize).min(n - 1);
        while used[r] {
            r = (r + 1) % n;
        }
        used[r] = true;
        out.push(r);
    }
    out.sort_unstable();
    out
}

/// Reduce a space to `target` equiprobable scenarios stratified by SSD; the
/// selected scenario closest to the baseline is replaced by the baseline
/// itself. Panics if `target` is zero or exceeds the space.
pub fn reduce(space: &[Vec<f64>], baseline: &[f64], target: usize) -> ScenarioSet {
    assert!(target >= 1 && target <= space.len(), "target must lie in 1..=space size");
    let d = ssd(space);
    let mut order: Vec<usize> = (0..space.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let ranks = stratified_ranks(space.len(), target);
    let w = baseline.len();
    let mut perturbations: Vec<Vec<f64>> = ranks.iter().map(|&r| space[order[r]].clone()).collect();
    perturbations[0] = vec![0.0; w];
    ScenarioSet::from_perturbations(baseline.to_vec(), perturbations)
}
