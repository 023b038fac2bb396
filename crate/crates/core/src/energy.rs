//! Parametric energy model: per-byte memory costs, per-MAC compute cost, and
//! static power for the chip and for each lane that is not power gated.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::accel::BatchExecutionStats;
use crate::error::{Error, Result};

const PJ: f64 = 1e-12;

/// Fields left out of a scenario file take their default value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    pub dram_pj_per_byte: f64,
    pub sram_read_pj_per_byte: f64,
    pub sram_write_pj_per_byte: f64,
    pub mac_pj: f64,
    pub static_watts: f64,
    pub lane_static_watts: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            dram_pj_per_byte: 20.0,
            sram_read_pj_per_byte: 1.0,
            sram_write_pj_per_byte: 1.2,
            mac_pj: 0.5,
            static_watts: 0.5,
            lane_static_watts: 0.030,
        }
    }
}

impl EnergyModel {
    pub fn zero() -> Self {
        EnergyModel {
            dram_pj_per_byte: 0.0,
            sram_read_pj_per_byte: 0.0,
            sram_write_pj_per_byte: 0.0,
            mac_pj: 0.0,
            static_watts: 0.0,
            lane_static_watts: 0.0,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        EnergyModel {
            dram_pj_per_byte: self.dram_pj_per_byte * k,
            sram_read_pj_per_byte: self.sram_read_pj_per_byte * k,
            sram_write_pj_per_byte: self.sram_write_pj_per_byte * k,
            mac_pj: self.mac_pj * k,
            static_watts: self.static_watts * k,
            lane_static_watts: self.lane_static_watts * k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("energy.dram_pj_per_byte", self.dram_pj_per_byte),
            ("energy.sram_read_pj_per_byte", self.sram_read_pj_per_byte),
            ("energy.sram_write_pj_per_byte", self.sram_write_pj_per_byte),
            ("energy.mac_pj", self.mac_pj),
            ("energy.static_watts", self.static_watts),
            ("energy.lane_static_watts", self.lane_static_watts),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be a non-negative number"));
            }
        }
        Ok(())
    }

    /// Chip static energy for an interval with no dispatch in flight.
    pub fn idle_energy(&self, seconds: f64) -> EnergyBreakdown {
        EnergyBreakdown {
            static_: self.static_watts * seconds,
            ..EnergyBreakdown::default()
        }
    }
}

/// Joules per component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub dram: f64,
    pub sram: f64,
    pub mac: f64,
    #[serde(rename = "static")]
    pub static_: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.dram + self.sram + self.mac + self.static_
    }

    pub fn dynamic(&self) -> f64 {
        self.dram + self.sram + self.mac
    }
}

impl Add for EnergyBreakdown {
    type Output = EnergyBreakdown;

    fn add(self, rhs: Self) -> Self {
        EnergyBreakdown {
            dram: self.dram + rhs.dram,
            sram: self.sram + rhs.sram,
            mac: self.mac + rhs.mac,
            static_: self.static_ + rhs.static_,
        }
    }
}

impl AddAssign for EnergyBreakdown {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// Energy of one batch-layer execution. Power-gated lane time-steps draw no
/// lane static power and execute no MACs.
pub fn batch_energy(stats: &BatchExecutionStats, em: &EnergyModel, frequency_hz: f64) -> EnergyBreakdown {
    let wall_s = stats.wall_cycles as f64 / frequency_hz;
    let step_s = stats.timestep_cycles as f64 / frequency_hz;
    let lane_seconds = stats.active_lanes() as f64 * wall_s - stats.gated_lane_timesteps as f64 * step_s;
    let executed_macs = stats.mac_count_useful + stats.mac_count_padded - stats.mac_count_gated;

    EnergyBreakdown {
        dram: (stats.dram_weight_bytes + stats.dram_activation_bytes) as f64 * em.dram_pj_per_byte * PJ,
        sram: (stats.sram_weight_reads_bytes as f64 * em.sram_read_pj_per_byte
            + stats.sram_weight_writes_bytes as f64 * em.sram_write_pj_per_byte)
            * PJ,
        mac: executed_macs as f64 * em.mac_pj * PJ,
        static_: em.static_watts * wall_s + em.lane_static_watts * lane_seconds.max(0.0),
    }
}

pub fn requests_per_joule(completed: u64, joules: f64) -> Result<f64> {
    if joules > 0.0 {
        Ok(completed as f64 / joules)
    } else if completed == 0 {
        Ok(0.0)
    } else {
        Err(Error::ZeroEnergy(completed))
    }
}
