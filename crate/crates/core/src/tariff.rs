//! Segmented convex imbalance tariff.
//!
//! Sign convention: `Im = supply - demand - dispatch`. Negative imbalance is
//! a shortage bought from the imbalance market (positive cost), positive
//! imbalance is a surplus sold back (negative cost, i.e. revenue).
//!
//! With `NPS = 2k` unit prices the curve has `k` segments per side. The inner
//! `k - 1` segments on each side are `threshold_kwh` wide; the outermost one
//! runs out to `big_m`. Prices are listed from the outermost shortage segment
//! to the outermost surplus segment, so the default
//! `[45.7, 15.0, 10.48, 0.0]` reads: beyond-threshold shortage, within-threshold
//! shortage, within-threshold surplus, beyond-threshold surplus.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::CoreError;

pub const DEFAULT_PRICES: [f64; 4] = [45.7, 15.0, 10.48, 0.0];
pub const DEFAULT_BIG_M: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceTariff {
    threshold_kwh: f64,
    prices: Vec<f64>,
    big_m: f64,
}

/// Which half of the curve a segment belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Shortage,
    Surplus,
}

/// One linear piece of the tariff, as a range of the segment variable.
///
/// Shortage segments take values in `[-width, 0]`, surplus ones in
/// `[0, width]`. `depth` counts from the origin outwards (0 = innermost).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub price: f64,
    pub side: Side,
    pub depth: usize,
    pub width: f64,
}

impl Segment {
    pub fn lower(&self) -> f64 {
        match self.side {
            Side::Shortage => -self.width,
            Side::Surplus => 0.0,
        }
    }

    pub fn upper(&self) -> f64 {
        match self.side {
            Side::Shortage => 0.0,
            Side::Surplus => self.width,
        }
    }

    /// Cost of one kWh of segment value (`-price`, so shortage is a positive
    /// cost and surplus a revenue).
    pub fn cost_coefficient(&self) -> f64 {
        -self.price
    }
}

impl ImbalanceTariff {
    pub fn new(threshold_kwh: f64, prices: Vec<f64>, big_m: f64) -> Result<Self, CoreError> {
        let nps = prices.len();
        if nps < 2 || !nps.is_multiple_of(2) {
            return Err(CoreError::InvalidTariff(format!(
                "need an even number (>= 2) of price segments, got {nps}"
            )));
        }
        if !(threshold_kwh.is_finite() && threshold_kwh > 0.0) {
            return Err(CoreError::InvalidTariff(format!(
                "threshold must be positive, got {threshold_kwh}"
            )));
        }
        let inner = (nps / 2 - 1) as f64 * threshold_kwh;
        if !(big_m.is_finite() && big_m > threshold_kwh && big_m > inner) {
            return Err(CoreError::InvalidTariff(format!(
                "big M ({big_m}) must exceed the threshold span ({})",
                inner.max(threshold_kwh)
            )));
        }
        if prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(CoreError::InvalidTariff("prices must be finite and >= 0".into()));
        }
        if prices.windows(2).any(|w| w[0] < w[1]) {
            return Err(CoreError::InvalidTariff(
                "prices must be non-increasing (convex cost curve)".into(),
            ));
        }
        Ok(Self {
            threshold_kwh,
            prices,
            big_m,
        })
    }

    /// Default four-segment prices and `M = 1e7` with the given threshold.
    pub fn with_threshold(threshold_kwh: f64) -> Result<Self, CoreError> {
        Self::new(threshold_kwh, DEFAULT_PRICES.to_vec(), DEFAULT_BIG_M)
    }

    pub fn threshold_kwh(&self) -> f64 {
        self.threshold_kwh
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    /// Number of price segments (NPS).
    pub fn segment_count(&self) -> usize {
        self.prices.len()
    }

    /// Segments per side.
    pub fn half(&self) -> usize {
        self.prices.len() / 2
    }

    /// Segments in price order (outermost shortage first).
    pub fn segments(&self) -> Vec<Segment> {
        let half = self.half();
        let outer = self.big_m - (half - 1) as f64 * self.threshold_kwh;
        self.prices
            .iter()
            .enumerate()
            .map(|(k, &price)| {
                let (side, depth) = if k < half {
                    (Side::Shortage, half - 1 - k)
                } else {
                    (Side::Surplus, k - half)
                };
                let width = if depth + 1 == half {
                    outer
                } else {
                    self.threshold_kwh
                };
                Segment {
                    price,
                    side,
                    depth,
                    width,
                }
            })
            .collect()
    }

    /// Scalar reference evaluator of the imbalance cost (JPY) for a signed
    /// imbalance (kWh).
    pub fn cost(&self, im_kwh: f64) -> f64 {
        let half = self.half();
        let th = self.threshold_kwh;
        let mut remaining = im_kwh.abs();
        let mut total = 0.0;
        for depth in 0..half {
            let price = if im_kwh < 0.0 {
                self.prices[half - 1 - depth]
            } else {
                self.prices[half + depth]
            };
            let take = if depth + 1 == half {
                remaining
            } else {
                remaining.min(th)
            };
            total += price * take;
            remaining -= take;
            if remaining <= 0.0 {
                break;
            }
        }
        if im_kwh < 0.0 {
            total
        } else {
            -total
        }
    }
}

/// Imbalance cost of `im_kwh` under `tariff`; see [`ImbalanceTariff::cost`].
pub fn imbalance_cost(im_kwh: f64, tariff: &ImbalanceTariff) -> f64 {
    tariff.cost(im_kwh)
}
