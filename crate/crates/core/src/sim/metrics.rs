use serde::{Deserialize, Serialize};

use crate::energy::EnergyBreakdown;

/// Aggregates for one simulated scenario, measured after warm-up.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub offered_load_rps: f64,
    /// Length of the measurement window in simulated seconds.
    pub measured_seconds: f64,
    pub arrivals: u64,
    pub completed_requests: u64,
    /// Requests still queued or executing when the run stopped.
    pub incomplete: u64,
    pub throughput_rps: f64,
    pub mean_latency_s: f64,
    pub p50_latency_s: f64,
    pub p95_latency_s: f64,
    pub p99_latency_s: f64,
    /// Batch-means 95% half-width of the mean latency, relative to the mean.
    pub latency_rel_half_width: f64,
    pub energy_joules: f64,
    pub energy_dram_joules: f64,
    pub energy_sram_joules: f64,
    pub energy_mac_joules: f64,
    pub energy_static_joules: f64,
    pub requests_per_joule: f64,
    /// Lane-time fractions; they sum to one.
    pub useful_mac_fraction: f64,
    pub padded_mac_fraction: f64,
    pub idle_fraction: f64,
    /// Padded MACs over all executed MACs.
    pub padded_compute_fraction: f64,
    pub dram_weight_bytes_per_request: f64,
    pub batches_dispatched: u64,
    pub batch_layers: u64,
    pub weight_swaps: u64,
    pub mean_in_system: f64,
    pub in_system_q3: f64,
    pub in_system_q4: f64,
    pub sustainable: bool,
    pub aborted: bool,
    pub conservation_violations: u64,
    pub causality_violations: u64,
}

impl MetricsReport {
    pub fn energy(&self) -> EnergyBreakdown {
        EnergyBreakdown {
            dram: self.energy_dram_joules,
            sram: self.energy_sram_joules,
            mac: self.energy_mac_joules,
            static_: self.energy_static_joules,
        }
    }

    pub fn completion_ratio(&self) -> f64 {
        if self.arrivals == 0 {
            1.0
        } else {
            self.completed_requests as f64 / self.arrivals as f64
        }
    }
}

/// Nearest-rank percentile of an ascending slice; 0 for an empty slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub const LATENCY_BATCHES: usize = 20;

/// Two-sided 97.5% Student-t quantile with 19 degrees of freedom.
const T_19: f64 = 2.093;

/// Relative 95% half-width of the mean from `LATENCY_BATCHES` batch means of
/// `samples` (in arrival order). Infinite when there are too few samples.
pub fn batch_means_rel_half_width(samples: &[f64]) -> f64 {
    let k = LATENCY_BATCHES;
    if samples.len() < 2 * k {
        return f64::INFINITY;
    }
    let per = samples.len() / k;
    let means: Vec<f64> = (0..k)
        .map(|b| samples[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / k as f64;
    if grand <= 0.0 {
        return 0.0;
    }
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (k - 1) as f64;
    T_19 * (var / k as f64).sqrt() / grand
}

/// Time-weighted average of a piecewise-constant count over four equal
/// quarters of `[start, end)`.
#[derive(Debug, Clone)]
pub struct QuarterAverages {
    start: f64,
    end: f64,
    area: [f64; 4],
    last_time: f64,
    value: f64,
}

impl QuarterAverages {
    pub fn new(start: f64, end: f64) -> Self {
        QuarterAverages {
            start,
            end,
            area: [0.0; 4],
            last_time: 0.0,
            value: 0.0,
        }
    }

    fn accumulate(&mut self, until: f64) {
        let q = (self.end - self.start) / 4.0;
        if q <= 0.0 {
            self.last_time = until;
            return;
        }
        for (i, area) in self.area.iter_mut().enumerate() {
            let lo = self.start + q * i as f64;
            let hi = lo + q;
            let overlap = until.min(hi) - self.last_time.max(lo);
            if overlap > 0.0 {
                *area += overlap * self.value;
            }
        }
        self.last_time = until;
    }

    pub fn set(&mut self, time: f64, value: f64) {
        self.accumulate(time);
        self.value = value;
    }

    /// Finalises at `time` and returns the four quarter means.
    pub fn finish(&mut self, time: f64) -> [f64; 4] {
        self.accumulate(time);
        let q = (self.end - self.start) / 4.0;
        if q <= 0.0 {
            return [0.0; 4];
        }
        self.area.map(|a| a / q)
    }
}
