//! Discrete-event simulation of a serving system: arrivals feed a batching
//! policy, the policy feeds the accelerator model, and every executed
//! batch-layer is charged to the energy model.

pub mod engine;
pub mod event;
pub mod metrics;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::{run_scenario, Engine};
pub use event::{Event, EventKind, EventQueue};
pub use metrics::MetricsReport;
pub use sweep::{find_saturation, saturation_sweep, Saturation};

fn default_duration() -> f64 {
    600.0
}

fn default_warmup() -> f64 {
    0.1
}

fn default_seed() -> u64 {
    1
}

fn default_abort() -> usize {
    50_000
}

fn default_extensions() -> u32 {
    2
}

fn default_half_width() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Simulated seconds of arrivals.
    #[serde(default = "default_duration")]
    pub duration: f64,
    /// Leading share of the run excluded from all aggregates.
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Stop early (and report the point as unsustainable) once this many
    /// requests are waiting.
    #[serde(default = "default_abort")]
    pub abort_queue_len: usize,
    /// Times a run may be lengthened by 1.5x when the mean-latency estimate
    /// is not yet within `target_rel_half_width`.
    #[serde(default = "default_extensions")]
    pub max_extensions: u32,
    #[serde(default = "default_half_width")]
    pub target_rel_half_width: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: default_duration(),
            warmup_fraction: default_warmup(),
            seed: default_seed(),
            abort_queue_len: default_abort(),
            max_extensions: default_extensions(),
            target_rel_half_width: default_half_width(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::config("sim.duration", "must be a non-negative number"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::config("sim.warmup_fraction", "must be in [0, 1)"));
        }
        if self.abort_queue_len == 0 {
            return Err(Error::config("sim.abort_queue_len", "must be >= 1"));
        }
        if self.target_rel_half_width.is_nan() || self.target_rel_half_width <= 0.0 {
            return Err(Error::config("sim.target_rel_half_width", "must be positive"));
        }
        Ok(())
    }
}
