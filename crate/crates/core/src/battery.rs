use alloc::format;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::CoreError;

/// Battery rating. Power values are energy per period (Δt = 1 period), so a
/// dispatch `p` moves `p` kWh across the meter in one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub capacity_kwh: f64,
    pub power_charge_kw: f64,
    pub power_discharge_kw: f64,
    pub soc_min_frac: f64,
    pub soc_max_frac: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub unit_count: u32,
}

impl BatterySpec {
    /// 50 synchronous 6.4 kWh / 12.8 kW units, SOC window 1 %..96 %, 95 %
    /// round-trip efficiency split evenly between charge and discharge.
    pub fn reference_fleet() -> Self {
        let eta = math::sqrt(0.95);
        Self {
            capacity_kwh: 6.4,
            power_charge_kw: 12.8,
            power_discharge_kw: 12.8,
            soc_min_frac: 0.01,
            soc_max_frac: 0.96,
            eta_charge: eta,
            eta_discharge: eta,
            unit_count: 50,
        }
    }

    /// Single aggregated unit of `capacity_kwh` with a 2E power rating and
    /// the reference SOC window and efficiencies.
    pub fn two_e(capacity_kwh: f64) -> Self {
        Self {
            capacity_kwh,
            power_charge_kw: 2.0 * capacity_kwh,
            power_discharge_kw: 2.0 * capacity_kwh,
            unit_count: 1,
            ..Self::reference_fleet()
        }
    }

    /// Zero-sized battery: forces dispatch to zero.
    pub fn none() -> Self {
        Self::two_e(0.0)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let bad = |msg: &str| Err(CoreError::InvalidBattery(format!("{msg}: {self:?}")));
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;
        if !non_negative(self.capacity_kwh)
            || !non_negative(self.power_charge_kw)
            || !non_negative(self.power_discharge_kw)
        {
            return bad("capacity and power ratings must be finite and >= 0");
        }
        if !(0.0 <= self.soc_min_frac
            && self.soc_min_frac < self.soc_max_frac
            && self.soc_max_frac <= 1.0)
        {
            return bad("need 0 <= soc_min_frac < soc_max_frac <= 1");
        }
        let eff = |e: f64| e > 0.0 && e <= 1.0;
        if !eff(self.eta_charge) || !eff(self.eta_discharge) {
            return bad("efficiencies must lie in (0, 1]");
        }
        if self.unit_count == 0 {
            return bad("unit_count must be >= 1");
        }
        Ok(())
    }

    /// Fold `unit_count` identical synchronous units into one equivalent unit.
    pub fn aggregate(&self) -> Self {
        let n = self.unit_count as f64;
        Self {
            capacity_kwh: self.capacity_kwh * n,
            power_charge_kw: self.power_charge_kw * n,
            power_discharge_kw: self.power_discharge_kw * n,
            unit_count: 1,
            ..*self
        }
    }

    pub fn soc_min(&self) -> f64 {
        self.soc_min_frac * self.capacity_kwh
    }

    pub fn soc_max(&self) -> f64 {
        self.soc_max_frac * self.capacity_kwh
    }

    /// State of charge after dispatching `p` (positive charges).
    pub fn step(&self, soc: f64, p: f64) -> f64 {
        if p >= 0.0 {
            soc + self.eta_charge * p
        } else {
            soc + p / self.eta_discharge
        }
    }
}
