//! Balancing-group formation by recursive switchpoint splitting of the
//! sorted criterion vector.
//!
//! Each range `[S, E]` (1-based customer indices into the sorted
//! [`DacVector`]) gets its own switchpoint model and MCMC run. The articulated
//! customer is the posterior mode of `tau`. The range splits after it when the
//! expected-criterion ratio between its last and first customer exceeds the
//! threshold and both children keep at least `min_group_size` customers.

mod mcmc;

pub use mcmc::{
    acceptance_probability, compute_alpha, log_target_log_space, reflect_tau, run_mcmc, tau_step,
    McmcParams, PosteriorSamples, SwitchpointModel, DEFAULT_BURN_IN_FRAC, DEFAULT_ITERATIONS,
};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng;
use crate::stats::DacVector;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroupError {
    #[error("switchpoint inference needs at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("observations must be finite and non-negative")]
    InvalidObservation,
    #[error("all observations are zero; alpha is undefined")]
    ZeroObservations,
    #[error("posterior sample set is empty")]
    EmptySamples,
    #[error("customer index {c} outside 1..={n}")]
    IndexOutOfRange { c: usize, n: usize },
    #[error("expected criterion at the range start is zero")]
    ZeroStart,
    #[error("invalid MCMC parameters")]
    InvalidMcmc,
    #[error("invalid grouping parameters: {0}")]
    InvalidParams(String),
}

/// Posterior-expected criterion at (1-based, window-relative) customer `c`:
/// draws whose switchpoint lies after `c` contribute their `l1`, the others
/// their `l2`, averaged over the retained draws.
pub fn expected_dac(samples: &PosteriorSamples, c: usize) -> Result<f64, GroupError> {
    let ns = samples.retained_count();
    if ns == 0 {
        return Err(GroupError::EmptySamples);
    }
    let max_tau = samples.tau.iter().copied().max().unwrap_or(0);
    if c == 0 {
        return Err(GroupError::IndexOutOfRange { c, n: max_tau });
    }
    let sum: f64 = samples
        .tau
        .iter()
        .zip(samples.lambda1.iter().zip(&samples.lambda2))
        .map(|(&t, (&l1, &l2))| if t > c { l1 } else { l2 })
        .sum();
    Ok(sum / ns as f64)
}

/// EDAC for every customer `1..=n` in one pass.
pub fn expected_dac_profile(samples: &PosteriorSamples, n: usize) -> Result<Vec<f64>, GroupError> {
    let ns = samples.retained_count();
    if ns == 0 {
        return Err(GroupError::EmptySamples);
    }
    // sum over draws with tau > c of l1 plus draws with tau <= c of l2
    let mut l1_at = alloc::vec![0.0; n + 2];
    let mut l2_at = alloc::vec![0.0; n + 2];
    for ((&t, &l1), &l2) in samples.tau.iter().zip(&samples.lambda1).zip(&samples.lambda2) {
        let t = t.min(n + 1);
        l1_at[t] += l1;
        l2_at[t] += l2;
    }
    let total_l1: f64 = l1_at.iter().sum();
    let mut out = Vec::with_capacity(n);
    let (mut l1_le, mut l2_le) = (0.0, 0.0);
    for c in 1..=n {
        l1_le += l1_at[c];
        l2_le += l2_at[c];
        out.push((total_l1 - l1_le + l2_le) / ns as f64);
    }
    Ok(out)
}

/// `beta * EDAC_E / EDAC_S` for the window `1..=n` (start `1`, end `n`).
pub fn delta_dac(samples: &PosteriorSamples, n: usize, beta: f64) -> Result<f64, GroupError> {
    let start = expected_dac(samples, 1)?;
    let end = expected_dac(samples, n)?;
    delta_from_edac(start, end, beta)
}

pub fn delta_from_edac(edac_start: f64, edac_end: f64, beta: f64) -> Result<f64, GroupError> {
    if edac_start <= 0.0 {
        return Err(GroupError::ZeroStart);
    }
    Ok(beta * edac_end / edac_start)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupParams {
    pub beta: f64,
    pub threshold: f64,
    pub min_group_size: usize,
    pub mcmc: McmcParams,
}

impl Default for GroupParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            threshold: 2.0,
            min_group_size: 4,
            mcmc: McmcParams::default(),
        }
    }
}

impl GroupParams {
    pub fn validate(&self) -> Result<(), GroupError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(GroupError::InvalidParams("beta must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(GroupError::InvalidParams("threshold must be positive".into()));
        }
        if self.min_group_size < 2 {
            return Err(GroupError::InvalidParams("min_group_size must be >= 2".into()));
        }
        self.mcmc.validate()
    }
}

/// One balancing group: customers `start..=end` (1-based, in sorted order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub start: usize,
    pub end: usize,
    pub customer_ids: Vec<String>,
    pub expected_dac_kwh: f64,
    pub capacity_bound_kwh: f64,
}

impl Group {
    pub fn size(&self) -> usize {
        self.end + 1 - self.start
    }
}

/// Record of one MCMC run inside the recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRecord {
    pub start: usize,
    pub end: usize,
    /// Articulated customer, absolute 1-based index.
    pub articulated: usize,
    pub delta_dac: f64,
    pub split: bool,
    pub samples: PosteriorSamples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupFormation {
    pub groups: Vec<Group>,
    pub splits: Vec<SplitRecord>,
}

/// Child seed for range `[start, end]`, independent of visiting order.
pub fn range_seed(seed: u64, start: usize, end: usize) -> u64 {
    rng::derive_seed(seed, &[rng::stream::GROUPS, start as u64, end as u64])
}

/// Divide-and-conquer group formation over a sorted criterion vector.
pub fn form_groups(
    dac: &DacVector,
    params: &GroupParams,
    seed: u64,
) -> Result<GroupFormation, GroupError> {
    params.validate()?;
    let values = dac.values();
    let ids: Vec<String> = dac.entries().iter().map(|e| e.customer_id.clone()).collect();
    let mut out = GroupFormation {
        groups: Vec::new(),
        splits: Vec::new(),
    };
    if values.is_empty() {
        return Ok(out);
    }
    // explicit stack, children pushed right-then-left so output is left-to-right
    let mut stack = alloc::vec![(1usize, values.len())];
    while let Some((start, end)) = stack.pop() {
        let window = &values[start - 1..end];
        let n = window.len();
        let emit_raw = |out: &mut GroupFormation| {
            let mean = math::mean(window);
            out.groups.push(Group {
                start,
                end,
                customer_ids: ids[start - 1..end].to_vec(),
                expected_dac_kwh: mean,
                capacity_bound_kwh: mean * n as f64,
            });
        };
        if n < 2 || n < params.min_group_size || window.iter().all(|&v| v == 0.0) {
            emit_raw(&mut out);
            continue;
        }
        let model = SwitchpointModel::new(window.to_vec())?;
        let samples = run_mcmc(&model, params.mcmc, range_seed(seed, start, end))?;
        let profile = expected_dac_profile(&samples, n)?;
        let tau = samples.tau_mode().ok_or(GroupError::EmptySamples)?;
        let delta = delta_from_edac(profile[0], profile[n - 1], params.beta)?;
        let left = tau;
        let right = n - tau;
        let split = delta > params.threshold
            && left >= params.min_group_size
            && right >= params.min_group_size;
        if split {
            let ac = start + tau - 1;
            stack.push((ac + 1, end));
            stack.push((start, ac));
        } else {
            let mean = math::mean(&profile);
            out.groups.push(Group {
                start,
                end,
                customer_ids: ids[start - 1..end].to_vec(),
                expected_dac_kwh: mean,
                capacity_bound_kwh: mean * n as f64,
            });
        }
        out.splits.push(SplitRecord {
            start,
            end,
            articulated: start + tau - 1,
            delta_dac: delta,
            split,
            samples,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn samples(draws: &[(usize, f64, f64)]) -> PosteriorSamples {
        PosteriorSamples {
            tau: draws.iter().map(|d| d.0).collect(),
            lambda1: draws.iter().map(|d| d.1).collect(),
            lambda2: draws.iter().map(|d| d.2).collect(),
            acceptance: [0.0; 3],
        }
    }

    #[test]
    fn expected_dac_forced_branches() {
        let s = samples(&[(5, 2.0, 8.0); 4]);
        assert_eq!(expected_dac(&s, 3).unwrap(), 2.0);
        assert_eq!(expected_dac(&s, 7).unwrap(), 8.0);
    }

    #[test]
    fn expected_dac_mixed_draws() {
        let s = samples(&[(5, 2.0, 8.0), (2, 3.0, 9.0)]);
        assert!((expected_dac(&s, 3).unwrap() - 5.5).abs() < 1e-12);
        assert_eq!(expected_dac(&samples(&[]), 1), Err(GroupError::EmptySamples));
    }

    #[test]
    fn profile_matches_pointwise() {
        let s = samples(&[(5, 2.0, 8.0), (2, 3.0, 9.0), (9, 1.0, 4.0), (1, 6.0, 7.0)]);
        let p = expected_dac_profile(&s, 9).unwrap();
        for c in 1..=9 {
            assert!((p[c - 1] - expected_dac(&s, c).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_dac_ratio() {
        assert_eq!(delta_from_edac(3.0, 3.0, 1.0).unwrap(), 1.0);
        assert_eq!(delta_from_edac(3.0, 9.0, 1.0).unwrap(), 3.0);
        assert_eq!(delta_from_edac(2.0, 8.0, 0.5).unwrap(), 2.0);
        assert_eq!(delta_from_edac(0.0, 8.0, 0.5), Err(GroupError::ZeroStart));
        let s = samples(&[(3, 2.0, 6.0); 3]);
        assert!((delta_dac(&s, 6, 1.0).unwrap() - 3.0).abs() < 1e-12);
    }

    fn dacs(values: &[f64]) -> DacVector {
        DacVector::from_pairs(values.iter().enumerate().map(|(i, &v)| (format!("c{i:03}"), v)))
            .unwrap()
    }

    fn fast_params() -> GroupParams {
        GroupParams {
            mcmc: McmcParams {
                iterations: 8000,
                burn_in_frac: 0.25,
            },
            ..GroupParams::default()
        }
    }

    #[test]
    fn single_customer_is_one_group() {
        let g = form_groups(&dacs(&[3.0]), &fast_params(), 1).unwrap();
        assert_eq!(g.groups.len(), 1);
        assert_eq!((g.groups[0].start, g.groups[0].end), (1, 1));
        assert!(g.splits.is_empty());
    }

    #[test]
    fn two_levels_split_once() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut v: Vec<f64> = (0..20).map(|_| 5.0 + rng.random_range(-0.5..0.5)).collect();
        v.extend((0..20).map(|_| 20.0 + rng.random_range(-1.0..1.0)));
        let g = form_groups(&dacs(&v), &fast_params(), 42).unwrap();
        assert_eq!(g.groups.len(), 2, "{:?}", g.groups);
        assert!((18..=22).contains(&g.groups[0].end));
        let first = &g.groups[0];
        assert!((first.capacity_bound_kwh - first.expected_dac_kwh * first.size() as f64).abs() < 1e-9);
    }

    #[test]
    fn homogeneous_stays_whole() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..40).map(|_| 10.0 + rng.random_range(-0.5..0.5)).collect();
        let g = form_groups(&dacs(&v), &fast_params(), 7).unwrap();
        assert_eq!(g.groups.len(), 1);
        assert!((g.splits[0].delta_dac - 1.0).abs() < 0.5);
    }

    #[test]
    fn all_zero_range_skips_mcmc() {
        let g = form_groups(&dacs(&[0.0; 6]), &fast_params(), 7).unwrap();
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.groups[0].expected_dac_kwh, 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        let p = GroupParams {
            min_group_size: 1,
            ..fast_params()
        };
        assert!(form_groups(&dacs(&[1.0, 2.0]), &p, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn groups_partition_and_are_deterministic(
            raw in proptest::collection::vec(0.1f64..40.0, 1..30),
            seed in 0u64..1000,
        ) {
            let params = GroupParams {
                mcmc: McmcParams { iterations: 1500, burn_in_frac: 0.25 },
                ..GroupParams::default()
            };
            let d = dacs(&raw);
            let g = form_groups(&d, &params, seed).unwrap();
            let mut next = 1;
            for grp in &g.groups {
                prop_assert_eq!(grp.start, next);
                prop_assert!(grp.end >= grp.start);
                next = grp.end + 1;
            }
            prop_assert_eq!(next, raw.len() + 1);
            prop_assert_eq!(&form_groups(&d, &params, seed).unwrap(), &g);
        }

        #[test]
        fn edac_is_monotone_on_sorted_data(
            raw in proptest::collection::vec(0.5f64..30.0, 4..25),
            seed in 0u64..100,
        ) {
            let mut v = raw.clone();
            v.sort_by(f64::total_cmp);
            let m = SwitchpointModel::new(v.clone()).unwrap();
            let s = run_mcmc(&m, McmcParams { iterations: 3000, burn_in_frac: 0.25 }, seed).unwrap();
            let p = expected_dac_profile(&s, v.len()).unwrap();
            // only checked where the chain put l2 above l1 in every draw
            if s.lambda1.iter().zip(&s.lambda2).all(|(a, b)| b >= a) {
                prop_assert!(p.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            }
        }
    }
}
