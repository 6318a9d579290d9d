//! Demand standard deviation per period of day (DSD), its maximum over the
//! day (MDSD), and the sorted demand-aggregation-criterion vector built from
//! it.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{CoreError, DemandSeries};

/// Population standard deviation of the demand in slot `period` over all
/// whole days of `series`.
pub fn compute_dsd(series: &DemandSeries, period: usize) -> Result<f64, CoreError> {
    let days = series.whole_days()?;
    let per_day = series.periods_per_day();
    if period >= per_day {
        return Err(CoreError::PeriodOutOfRange { period, per_day });
    }
    let samples: Vec<f64> = (0..days).map(|d| series.day(d)[period]).collect();
    Ok(math::population_std(&samples))
}

/// Maximum of [`compute_dsd`] over every period of the day. This is the
/// customer's demand aggregation criterion.
pub fn compute_mdsd(series: &DemandSeries) -> Result<f64, CoreError> {
    let per_day = series.periods_per_day();
    let mut best = 0.0f64;
    for t in 0..per_day {
        best = best.max(compute_dsd(series, t)?);
    }
    Ok(best)
}

/// One customer's criterion value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DacEntry {
    pub customer_id: String,
    pub dac_kwh: f64,
}

/// Criterion values sorted ascending (ties keep insertion order).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DacVector {
    entries: Vec<DacEntry>,
}

impl DacVector {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, f64)>) -> Result<Self, CoreError> {
        let mut entries: Vec<DacEntry> = pairs
            .into_iter()
            .map(|(customer_id, dac_kwh)| DacEntry { customer_id, dac_kwh })
            .collect();
        if let Some((index, e)) = entries
            .iter()
            .enumerate()
            .find(|(_, e)| !e.dac_kwh.is_finite() || e.dac_kwh < 0.0)
        {
            return Err(CoreError::BadValue {
                index,
                value: e.dac_kwh,
            });
        }
        entries.sort_by(|a, b| a.dac_kwh.total_cmp(&b.dac_kwh));
        Ok(Self { entries })
    }

    /// MDSD of every series, sorted ascending.
    pub fn from_series<'a>(
        series: impl IntoIterator<Item = &'a DemandSeries>,
    ) -> Result<Self, CoreError> {
        let mut pairs = Vec::new();
        for s in series {
            pairs.push((String::from(s.customer_id()), compute_mdsd(s)?));
        }
        Self::from_pairs(pairs)
    }

    pub fn entries(&self) -> &[DacEntry] {
        &self.entries
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.dac_kwh).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn jan1() -> NaiveDate {
        NaiveDate::from_ymd_opt(2013, 1, 1).unwrap()
    }

    fn series(values: Vec<f64>) -> DemandSeries {
        DemandSeries::daily("c", jan1(), values).unwrap()
    }

    /// Welford's single-pass variance, independent of `math::population_std`.
    fn welford_std(xs: &[f64]) -> f64 {
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for &x in xs {
            n += 1.0;
            let delta = x - mean;
            mean += delta / n;
            m2 += delta * (x - mean);
        }
        libm::sqrt(m2 / n)
    }

    #[test]
    fn dsd_of_two_points() {
        let mut v = vec![0.0; 96];
        v[0] = 1.0;
        v[48] = 3.0;
        assert_eq!(compute_dsd(&series(v), 0).unwrap(), 1.0);
    }

    #[test]
    fn constant_series_has_zero_dsd_and_mdsd() {
        let s = series(vec![7.5; 48 * 5]);
        assert_eq!(compute_dsd(&s, 17).unwrap(), 0.0);
        assert_eq!(compute_mdsd(&s).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_sample_dsd() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(100.0, 5.0).unwrap();
        let mut v = vec![0.0; 48 * 31];
        let mut at_period = Vec::new();
        for d in 0..31 {
            let x = normal.sample(&mut rng);
            v[d * 48 + 10] = x;
            at_period.push(x);
        }
        let dsd = compute_dsd(&series(v), 10).unwrap();
        assert!((3.5..=6.5).contains(&dsd), "dsd = {dsd}");
        assert!((dsd - welford_std(&at_period)).abs() < 1e-9);
    }

    #[test]
    fn mdsd_picks_the_noisy_period() {
        // period 30 alternates 96/104 -> population std exactly 4
        let mut v = vec![50.0; 48 * 6];
        for d in 0..6 {
            v[d * 48 + 30] = if d % 2 == 0 { 96.0 } else { 104.0 };
        }
        let s = series(v);
        let brute = (0..48)
            .map(|t| {
                let xs: Vec<f64> = (0..6).map(|d| s.day(d)[t]).collect();
                welford_std(&xs)
            })
            .fold(0.0, f64::max);
        assert!((brute - 4.0).abs() < 1e-12);
        assert!((compute_mdsd(&s).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn single_day_series_is_zero() {
        let v: Vec<f64> = (0..48).map(|i| i as f64).collect();
        let s = series(v);
        for t in 0..48 {
            assert_eq!(compute_dsd(&s, t).unwrap(), 0.0);
        }
        assert_eq!(compute_mdsd(&s).unwrap(), 0.0);
    }

    #[test]
    fn rejects_partial_and_empty() {
        assert!(matches!(
            compute_dsd(&series(vec![1.0; 50]), 0),
            Err(CoreError::PartialDay { .. })
        ));
        assert_eq!(compute_mdsd(&series(vec![])), Err(CoreError::EmptySeries));
        assert!(matches!(
            compute_dsd(&series(vec![1.0; 48]), 48),
            Err(CoreError::PeriodOutOfRange { .. })
        ));
    }

    #[test]
    fn dac_vector_sorts_ascending() {
        let v = DacVector::from_pairs([
            ("b".into(), 3.0),
            ("a".into(), 1.0),
            ("c".into(), 2.0),
        ])
        .unwrap();
        assert_eq!(v.values(), vec![1.0, 2.0, 3.0]);
        assert!(DacVector::from_pairs([("x".into(), -1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn mdsd_dominates_and_ignores_day_order(
            raw in proptest::collection::vec(0.0f64..200.0, 48 * 4),
            perm_seed in 0u64..1000,
        ) {
            let s = series(raw.clone());
            let mdsd = compute_mdsd(&s).unwrap();
            let dsds: Vec<f64> = (0..48).map(|t| compute_dsd(&s, t).unwrap()).collect();
            prop_assert!(dsds.iter().all(|&x| x <= mdsd));
            prop_assert!(dsds.contains(&mdsd));

            // rotate days by a seed-chosen amount and swap two
            let mut days: Vec<Vec<f64>> = (0..4).map(|d| s.day(d).to_vec()).collect();
            days.rotate_left((perm_seed % 4) as usize);
            days.swap(0, (perm_seed as usize / 4) % 4);
            let permuted = series(days.concat());
            prop_assert!((compute_mdsd(&permuted).unwrap() - mdsd).abs() < 1e-9);
        }
    }
}
