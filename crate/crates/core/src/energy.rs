//! Power accounting, battery storage, microgrid mode and the N log N
//! processing-time model.
//!
//! Units: power in milliwatts, time in seconds, so energy is in millijoules.
//! Battery quantities are in kWh.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{DeviceSpec, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("durations must be nonnegative (active {active_s}, idle {idle_s})")]
    NegativeDuration { active_s: f64, idle_s: f64 },
    #[error("energy amount must be nonnegative, got {0}")]
    NegativeEnergy(f64),
    #[error("charging {added} kWh would exceed capacity ({soc} of {capacity} kWh stored)")]
    OverCapacity { soc: f64, added: f64, capacity: f64 },
    #[error("discharging {requested} kWh with only {soc} kWh stored")]
    Underflow { soc: f64, requested: f64 },
    #[error("processing model needs n >= 1")]
    NonpositiveN,
    #[error("invalid battery parameters: {0}")]
    InvalidBess(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub node: NodeId,
    pub active_time_s: f64,
    pub idle_time_s: f64,
    pub energy_mj: f64,
}

impl EnergyLedger {
    pub fn new(node: NodeId) -> Self {
        EnergyLedger {
            node,
            active_time_s: 0.0,
            idle_time_s: 0.0,
            energy_mj: 0.0,
        }
    }
}

/// Adds `active_s` at active power and `idle_s` at idle power to `ledger`.
pub fn accrue_energy(
    ledger: &EnergyLedger,
    spec: &DeviceSpec,
    active_s: f64,
    idle_s: f64,
) -> Result<EnergyLedger, EnergyError> {
    // NaN fails both comparisons.
    if !(active_s >= 0.0 && idle_s >= 0.0) {
        return Err(EnergyError::NegativeDuration { active_s, idle_s });
    }
    Ok(EnergyLedger {
        node: ledger.node,
        active_time_s: ledger.active_time_s + active_s,
        idle_time_s: ledger.idle_time_s + idle_s,
        energy_mj: ledger.energy_mj + active_s * spec.power_active_mw + idle_s * spec.power_idle_mw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BessState {
    pub capacity_kwh: f64,
    pub soc_kwh: f64,
    #[serde(default = "unit_efficiency")]
    pub efficiency: f64,
}

fn unit_efficiency() -> f64 {
    1.0
}

impl BessState {
    pub fn new(capacity_kwh: f64, soc_kwh: f64, efficiency: f64) -> Result<Self, EnergyError> {
        let b = BessState {
            capacity_kwh,
            soc_kwh,
            efficiency,
        };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<(), EnergyError> {
        if !(self.capacity_kwh.is_finite() && self.capacity_kwh > 0.0) {
            return Err(EnergyError::InvalidBess("capacity_kwh must be positive"));
        }
        if !(self.soc_kwh >= 0.0 && self.soc_kwh <= self.capacity_kwh) {
            return Err(EnergyError::InvalidBess(
                "soc_kwh must lie in [0, capacity_kwh]",
            ));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(EnergyError::InvalidBess("efficiency must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Stored energy that `energy_kwh` of input would fill up to capacity.
    pub fn headroom_input_kwh(&self) -> f64 {
        (self.capacity_kwh - self.soc_kwh) / self.efficiency
    }
}

pub fn bess_charge(b: &BessState, energy_kwh: f64) -> Result<BessState, EnergyError> {
    if energy_kwh.is_nan() || energy_kwh < 0.0 {
        return Err(EnergyError::NegativeEnergy(energy_kwh));
    }
    let added = energy_kwh * b.efficiency;
    let soc = b.soc_kwh + added;
    if soc > b.capacity_kwh {
        return Err(EnergyError::OverCapacity {
            soc: b.soc_kwh,
            added,
            capacity: b.capacity_kwh,
        });
    }
    Ok(BessState { soc_kwh: soc, ..*b })
}

pub fn bess_discharge(b: &BessState, energy_kwh: f64) -> Result<BessState, EnergyError> {
    if energy_kwh.is_nan() || energy_kwh < 0.0 {
        return Err(EnergyError::NegativeEnergy(energy_kwh));
    }
    if energy_kwh > b.soc_kwh {
        return Err(EnergyError::Underflow {
            soc: b.soc_kwh,
            requested: energy_kwh,
        });
    }
    Ok(BessState {
        soc_kwh: b.soc_kwh - energy_kwh,
        ..*b
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MicrogridMode {
    GridConnected,
    Autonomous,
}

/// Islands when the main grid is lost and reconnects when it returns.
pub fn mode_transition(_mode: MicrogridMode, grid_available: bool) -> MicrogridMode {
    if grid_available {
        MicrogridMode::GridConnected
    } else {
        MicrogridMode::Autonomous
    }
}

/// Processing time `c_ms * n * log2(n)` for a data set of `n` elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessingModel {
    pub c_ms: f64,
}

impl Default for ProcessingModel {
    fn default() -> Self {
        ProcessingModel { c_ms: 1.0 }
    }
}

pub fn processing_time(m: &ProcessingModel, n: u64) -> Result<f64, EnergyError> {
    if n == 0 {
        return Err(EnergyError::NonpositiveN);
    }
    let n = n as f64;
    Ok(m.c_ms * (n * n.log2()))
}
