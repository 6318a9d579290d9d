//! Balancing-group formation and robust battery scheduling for imbalance
//! reduction.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! computation; file formats, configuration and the command line live in the
//! `imbal` companion crate.
//!
//! Pipeline overview:
//!
//! * [`stats`] turns per-customer demand into the demand aggregation
//!   criterion (the maximum per-period standard deviation across days).
//! * [`groupform`] fits a Poisson switchpoint model to the sorted criterion
//!   vector with Metropolis–Hastings and splits it recursively into balancing
//!   groups.
//! * [`predictor`], [`scengen`], [`scheduler`] and [`milp`] make up the
//!   on-line stochastic sliding-window charge/discharge scheduler.
//! * [`simulator`] drives the closed loop and the baselines.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod battery;
pub mod groupform;
pub mod math;
pub mod milp;
pub mod predictor;
pub mod rng;
pub mod scengen;
pub mod scheduler;
pub mod series;
pub mod simulator;
pub mod stats;
pub mod tariff;

mod error;

pub use battery::BatterySpec;
pub use error::CoreError;
pub use series::{Calendar, DemandSeries};
pub use tariff::{imbalance_cost, ImbalanceTariff};
