//! Poisson switchpoint model and its Metropolis–Hastings sampler.
//!
//! Model over an ordered observation vector `k_1..k_NO`:
//!
//! ```text
//! alpha     = NO / sum(k)
//! l1, l2    ~ Exp(alpha)
//! tau       ~ DiscreteUniform(1, NO)
//! k_c       ~ Poisson(l1) if c <= tau else Poisson(l2)
//! ```
//!
//! Observations are continuous; the likelihood uses `lnΓ(k + 1)` in place of
//! `ln k!`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::GroupError;
use crate::math;
use crate::rng;

pub const DEFAULT_ITERATIONS: usize = 80_000;
pub const DEFAULT_BURN_IN_FRAC: f64 = 0.25;
const LOG_LAMBDA_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchpointModel {
    observations: Vec<f64>,
    alpha: f64,
    // prefix[c] = sum of the first c observations
    prefix: Vec<f64>,
    ln_gamma_total: f64,
}

/// Exp(alpha) rate hyper-parameter: the inverse of the mean observation.
pub fn compute_alpha(observations: &[f64]) -> Result<f64, GroupError> {
    if observations.is_empty() {
        return Err(GroupError::TooFewObservations(0));
    }
    if observations.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(GroupError::InvalidObservation);
    }
    let sum: f64 = observations.iter().sum();
    if sum <= 0.0 {
        return Err(GroupError::ZeroObservations);
    }
    Ok(observations.len() as f64 / sum)
}

impl SwitchpointModel {
    pub fn new(observations: Vec<f64>) -> Result<Self, GroupError> {
        let alpha = compute_alpha(&observations)?;
        let mut prefix = Vec::with_capacity(observations.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &k in &observations {
            acc += k;
            prefix.push(acc);
        }
        let ln_gamma_total = observations.iter().map(|&k| math::ln_gamma(k + 1.0)).sum();
        Ok(Self {
            observations,
            alpha,
            prefix,
            ln_gamma_total,
        })
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// NO.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Unnormalized log posterior, evaluated term by term.
    pub fn log_posterior(&self, tau: usize, l1: f64, l2: f64) -> f64 {
        if !(l1 > 0.0 && l2 > 0.0) || tau < 1 || tau > self.len() {
            return f64::NEG_INFINITY;
        }
        let a = self.alpha;
        let mut lp = 2.0 * math::ln(a) - a * l1 - a * l2;
        let (ln1, ln2) = (math::ln(l1), math::ln(l2));
        for (i, &k) in self.observations.iter().enumerate() {
            let (lam, ln_lam) = if i < tau { (l1, ln1) } else { (l2, ln2) };
            lp += k * ln_lam - lam - math::ln_gamma(k + 1.0);
        }
        lp
    }

    /// Same value as [`Self::log_posterior`] in O(1) via prefix sums.
    pub fn log_posterior_fast(&self, tau: usize, l1: f64, l2: f64) -> f64 {
        if !(l1 > 0.0 && l2 > 0.0) || tau < 1 || tau > self.len() {
            return f64::NEG_INFINITY;
        }
        let a = self.alpha;
        let n = self.len() as f64;
        let t = tau as f64;
        let k1 = self.prefix[tau];
        let k2 = self.prefix[self.len()] - k1;
        2.0 * math::ln(a) - a * (l1 + l2) + k1 * math::ln(l1) - t * l1 + k2 * math::ln(l2)
            - (n - t) * l2
            - self.ln_gamma_total
    }
}

/// Retained draws after burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub tau: Vec<usize>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// Metropolis acceptance rates for (l1, l2, tau) over the whole chain.
    pub acceptance: [f64; 3],
}

impl PosteriorSamples {
    pub fn retained_count(&self) -> usize {
        self.tau.len()
    }

    /// Most frequent tau; ties go to the smaller index.
    pub fn tau_mode(&self) -> Option<usize> {
        let max_tau = *self.tau.iter().max()?;
        let mut counts = alloc::vec![0usize; max_tau + 1];
        for &t in &self.tau {
            counts[t] += 1;
        }
        let mut best = 0;
        for (t, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = t;
            }
        }
        Some(best)
    }

    pub fn mean_lambda1(&self) -> f64 {
        math::mean(&self.lambda1)
    }

    pub fn mean_lambda2(&self) -> f64 {
        math::mean(&self.lambda2)
    }

    pub fn mean_tau(&self) -> f64 {
        self.tau.iter().map(|&t| t as f64).sum::<f64>() / self.tau.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcParams {
    pub iterations: usize,
    pub burn_in_frac: f64,
}

impl Default for McmcParams {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            burn_in_frac: DEFAULT_BURN_IN_FRAC,
        }
    }
}

impl McmcParams {
    pub fn validate(&self) -> Result<(), GroupError> {
        if self.iterations == 0 || !(0.0..1.0).contains(&self.burn_in_frac) {
            return Err(GroupError::InvalidMcmc);
        }
        if self.retained() == 0 {
            return Err(GroupError::InvalidMcmc);
        }
        Ok(())
    }

    pub fn burned(&self) -> usize {
        math::floor(self.burn_in_frac * self.iterations as f64) as usize
    }

    pub fn retained(&self) -> usize {
        self.iterations - self.burned()
    }
}

/// Metropolis acceptance probability for a move whose log target changes by
/// `delta`.
#[inline]
pub fn acceptance_probability(delta: f64) -> f64 {
    if delta >= 0.0 {
        1.0
    } else if delta.is_nan() {
        0.0
    } else {
        math::exp(delta)
    }
}

/// Log target of the log-space random walk for one rate: the posterior in
/// `λ` plus the log-Jacobian `ln λ` of the change of variables.
#[inline]
pub fn log_target_log_space(log_posterior: f64, lambda: f64) -> f64 {
    log_posterior + math::ln(lambda)
}

/// Reflecting symmetric integer walk on `1..=n`; the mirrors sit half a step
/// outside the range so the proposal stays symmetric.
pub fn reflect_tau(proposal: i64, n: usize) -> usize {
    let n = n as i64;
    let mut t = proposal;
    loop {
        if t < 1 {
            t = 1 - t;
        } else if t > n {
            t = 2 * n + 1 - t;
        } else {
            return t as usize;
        }
    }
}

/// Step bound of the tau walk: `max(1, NO / 20)`.
pub fn tau_step(n: usize) -> usize {
    (n / 20).max(1)
}

/// Metropolis-within-Gibbs sweep per iteration: `l1`, then `l2` (Gaussian
/// random walk on `ln λ`), then `tau` (symmetric integer walk). One draw is
/// recorded per sweep; the first `burn_in_frac` of them are discarded.
pub fn run_mcmc(
    model: &SwitchpointModel,
    params: McmcParams,
    seed: u64,
) -> Result<PosteriorSamples, GroupError> {
    params.validate()?;
    let n = model.len();
    if n < 2 {
        return Err(GroupError::TooFewObservations(n));
    }
    let mut rng = rng::rng_from(seed);
    let half = n / 2;
    let obs = model.observations();
    let floor = 1e-3 / model.alpha();
    let mut l1 = math::mean(&obs[..half]).max(floor);
    let mut l2 = math::mean(&obs[half..]).max(floor);
    let mut tau = half.max(1);
    let mut lp = model.log_posterior_fast(tau, l1, l2);
    let step = tau_step(n) as i64;

    let burned = params.burned();
    let retained = params.retained();
    let mut out = PosteriorSamples {
        tau: Vec::with_capacity(retained),
        lambda1: Vec::with_capacity(retained),
        lambda2: Vec::with_capacity(retained),
        acceptance: [0.0; 3],
    };
    let mut accepted = [0usize; 3];

    for it in 0..params.iterations {
        // l1
        let z: f64 = StandardNormal.sample(&mut rng);
        let cand = l1 * math::exp(LOG_LAMBDA_STEP * z);
        let lp_cand = model.log_posterior_fast(tau, cand, l2);
        let delta = log_target_log_space(lp_cand, cand) - log_target_log_space(lp, l1);
        if rng.random::<f64>() < acceptance_probability(delta) {
            l1 = cand;
            lp = lp_cand;
            accepted[0] += 1;
        }
        // l2
        let z: f64 = StandardNormal.sample(&mut rng);
        let cand = l2 * math::exp(LOG_LAMBDA_STEP * z);
        let lp_cand = model.log_posterior_fast(tau, l1, cand);
        let delta = log_target_log_space(lp_cand, cand) - log_target_log_space(lp, l2);
        if rng.random::<f64>() < acceptance_probability(delta) {
            l2 = cand;
            lp = lp_cand;
            accepted[1] += 1;
        }
        // tau: offset uniform in [-step, step] \ {0}
        let mut off = rng.random_range(1..=step);
        if rng.random::<bool>() {
            off = -off;
        }
        let cand = reflect_tau(tau as i64 + off, n);
        let lp_cand = model.log_posterior_fast(cand, l1, l2);
        if rng.random::<f64>() < acceptance_probability(lp_cand - lp) {
            tau = cand;
            lp = lp_cand;
            accepted[2] += 1;
        }

        if it >= burned {
            out.tau.push(tau);
            out.lambda1.push(l1);
            out.lambda2.push(l2);
        }
    }
    let total = params.iterations as f64;
    out.acceptance = [
        accepted[0] as f64 / total,
        accepted[1] as f64 / total,
        accepted[2] as f64 / total,
    ];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_distr::Poisson;

    #[test]
    fn alpha_is_inverse_mean() {
        assert!((compute_alpha(&[2.0, 4.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((compute_alpha(&[5.0]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(compute_alpha(&[0.0, 0.0]), Err(GroupError::ZeroObservations));
    }

    #[test]
    fn log_posterior_hand_value() {
        let m = SwitchpointModel::new(vec![1.0, 1.0]).unwrap();
        let a: f64 = 1.0;
        let expected = 2.0 * libm::log(a) - 2.0 * a - 2.0;
        assert!((m.log_posterior(1, 1.0, 1.0) - expected).abs() < 1e-12);
        assert_eq!(m.log_posterior(1, 0.0, 1.0), f64::NEG_INFINITY);
        assert_eq!(m.log_posterior(1, -1.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn fast_and_literal_log_posterior_agree() {
        let obs: Vec<f64> = (0..30).map(|i| 1.5 + (i as f64 * 0.37) % 7.0).collect();
        let m = SwitchpointModel::new(obs).unwrap();
        for tau in 1..=30 {
            for &(l1, l2) in &[(0.5, 3.0), (4.0, 4.0), (9.0, 0.2)] {
                let a = m.log_posterior(tau, l1, l2);
                let b = m.log_posterior_fast(tau, l1, l2);
                assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{tau} {a} {b}");
            }
        }
    }

    #[test]
    fn integer_observations_give_poisson_pmf() {
        // ln of the Poisson pmf computed with an explicit factorial
        let obs = vec![0.0, 3.0, 5.0];
        let m = SwitchpointModel::new(obs.clone()).unwrap();
        let (l1, l2, tau) = (2.0f64, 4.0f64, 2);
        let a = m.alpha();
        let mut expected = 2.0 * a.ln() - a * (l1 + l2);
        for (i, &k) in obs.iter().enumerate() {
            let lam: f64 = if i < tau { l1 } else { l2 };
            let fact: f64 = (1..=(k as u64)).map(|x| x as f64).product();
            expected += (lam.powf(k) * (-lam).exp() / fact).ln();
        }
        assert!((m.log_posterior(tau, l1, l2) - expected).abs() < 1e-10);
    }

    #[test]
    fn concave_in_log_rates_for_fixed_tau() {
        // finite-difference Hessian in (ln l1, ln l2) must be negative semidefinite
        let obs: Vec<f64> = (0..20).map(|i| if i < 10 { 4.0 } else { 12.0 }).collect();
        let m = SwitchpointModel::new(obs).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let h = 1e-3;
        for _ in 0..50 {
            let u: f64 = rng.random_range(-2.0..3.0);
            let v: f64 = rng.random_range(-2.0..3.0);
            let tau = rng.random_range(1..=20);
            let f = |x: f64, y: f64| m.log_posterior(tau, x.exp(), y.exp());
            let fuu = (f(u + h, v) - 2.0 * f(u, v) + f(u - h, v)) / (h * h);
            let fvv = (f(u, v + h) - 2.0 * f(u, v) + f(u, v - h)) / (h * h);
            let fuv = (f(u + h, v + h) - f(u + h, v - h) - f(u - h, v + h) + f(u - h, v - h))
                / (4.0 * h * h);
            assert!(fuu <= 1e-4 && fvv <= 1e-4);
            assert!(fuu * fvv - fuv * fuv >= -1e-4);
        }
    }

    #[test]
    fn retained_count_arithmetic() {
        let m = SwitchpointModel::new(vec![1.0, 2.0, 3.0]).unwrap();
        let s = run_mcmc(
            &m,
            McmcParams {
                iterations: 4,
                burn_in_frac: 0.25,
            },
            1,
        )
        .unwrap();
        assert_eq!(s.retained_count(), 3);
        assert_eq!(s.lambda1.len(), 3);
        assert_eq!(s.lambda2.len(), 3);
    }

    #[test]
    fn chain_is_deterministic() {
        let obs: Vec<f64> = (0..25).map(|i| (i % 7) as f64 + 1.0).collect();
        let m = SwitchpointModel::new(obs).unwrap();
        let p = McmcParams {
            iterations: 2000,
            burn_in_frac: 0.25,
        };
        assert_eq!(run_mcmc(&m, p, 9).unwrap(), run_mcmc(&m, p, 9).unwrap());
        assert_ne!(run_mcmc(&m, p, 9).unwrap(), run_mcmc(&m, p, 10).unwrap());
    }

    #[test]
    fn draws_stay_in_support() {
        let obs: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
        let m = SwitchpointModel::new(obs).unwrap();
        let s = run_mcmc(&m, McmcParams { iterations: 5000, burn_in_frac: 0.2 }, 4).unwrap();
        assert!(s.tau.iter().all(|&t| (1..=12).contains(&t)));
        assert!(s.lambda1.iter().chain(&s.lambda2).all(|&l| l > 0.0));
    }

    #[test]
    fn acceptance_matches_log_posterior_difference() {
        let obs: Vec<f64> = (0..10).map(|i| 2.0 + i as f64).collect();
        let m = SwitchpointModel::new(obs).unwrap();
        // tau move: plain Metropolis on the log posterior
        let (l1, l2) = (3.0, 9.0);
        for (from, to) in [(3usize, 4usize), (5, 2), (7, 8)] {
            let d = m.log_posterior(to, l1, l2) - m.log_posterior(from, l1, l2);
            let expected = if d >= 0.0 { 1.0 } else { d.exp() };
            assert!((acceptance_probability(d) - expected).abs() < 1e-12);
        }
        // rate move in log space carries the Jacobian term
        let (from, to) = (3.0, 3.3);
        let d = log_target_log_space(m.log_posterior(5, to, l2), to)
            - log_target_log_space(m.log_posterior(5, from, l2), from);
        let direct = m.log_posterior(5, to, l2) - m.log_posterior(5, from, l2) + (to / from).ln();
        assert!((d - direct).abs() < 1e-10);
        assert!((acceptance_probability(d) - direct.exp().min(1.0)).abs() < 1e-12);
    }

    #[test]
    fn tau_reflection_is_symmetric() {
        // proposal kernel q(a -> b) by enumeration over offsets must be symmetric
        for n in [2usize, 3, 7, 40, 60] {
            let s = tau_step(n) as i64;
            let q = |a: usize, b: usize| {
                (1..=s)
                    .flat_map(|o| [o, -o])
                    .filter(|&o| reflect_tau(a as i64 + o, n) == b)
                    .count()
            };
            for a in 1..=n {
                for b in 1..=n {
                    assert_eq!(q(a, b), q(b, a), "n={n} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn planted_switchpoint_is_recovered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let lo = Poisson::new(5.0).unwrap();
        let hi = Poisson::new(20.0).unwrap();
        let obs: Vec<f64> = (0..60)
            .map(|i| if i < 30 { lo.sample(&mut rng) } else { hi.sample(&mut rng) })
            .collect();
        let m = SwitchpointModel::new(obs).unwrap();
        let s = run_mcmc(&m, McmcParams { iterations: 20_000, burn_in_frac: 0.25 }, 5).unwrap();
        let mode = s.tau_mode().unwrap();
        assert!((28..=32).contains(&mode), "mode {mode}");
    }
}
