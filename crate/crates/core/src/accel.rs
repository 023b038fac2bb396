//! Timing and traffic models for the two accelerator backends.
//!
//! * E-PUR-like: one lane per batched sequence; each lane has a DPU per
//!   compute unit and the gates of a cell are evaluated in parallel across
//!   compute units. Weights live in a buffer shared (broadcast) by all lanes.
//! * TPU-like: an output-stationary systolic array. Neurons fold over the
//!   columns, each fold streams one weight per cycle per column, and every row
//!   (lane) advances in lockstep.
//!
//! The on-chip buffer holds one layer at a time. Dispatching a layer that is
//! not resident costs a full weight fetch from DRAM that, unless
//! `overlap_weight_fetch` is set, sits on the critical path before compute.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RnnModel;
use crate::sched::BatchPlan;

fn default_pipeline_latency() -> u64 {
    10
}

fn default_dram_bandwidth() -> f64 {
    25.6e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EPurConfig {
    pub num_lanes: usize,
    /// MACs per cycle per lane per compute unit.
    pub dpu_width: u64,
    pub num_compute_units: u64,
    pub frequency_hz: f64,
    /// On-chip weight capacity per compute unit.
    pub weight_buffer_bytes: u64,
    #[serde(default = "default_dram_bandwidth")]
    pub dram_bandwidth_bytes_per_sec: f64,
    #[serde(default = "default_pipeline_latency")]
    pub pipeline_latency_cycles: u64,
    #[serde(default)]
    pub overlap_weight_fetch: bool,
    /// Re-fetch the part of a layer that does not fit on chip on every
    /// time-step instead of once per layer dispatch.
    #[serde(default)]
    pub restream_oversized_layers: bool,
}

impl Default for EPurConfig {
    fn default() -> Self {
        EPurConfig {
            num_lanes: 64,
            dpu_width: 64,
            num_compute_units: 4,
            frequency_hz: 500e6,
            weight_buffer_bytes: 2 << 20,
            dram_bandwidth_bytes_per_sec: default_dram_bandwidth(),
            pipeline_latency_cycles: default_pipeline_latency(),
            overlap_weight_fetch: false,
            restream_oversized_layers: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpuConfig {
    pub rows: usize,
    pub cols: u64,
    pub frequency_hz: f64,
    pub sram_bytes: u64,
    #[serde(default = "default_dram_bandwidth")]
    pub dram_bandwidth_bytes_per_sec: f64,
    #[serde(default = "default_pipeline_latency")]
    pub pipeline_latency_cycles: u64,
    #[serde(default)]
    pub overlap_weight_fetch: bool,
    #[serde(default)]
    pub restream_oversized_layers: bool,
}

impl Default for TpuConfig {
    fn default() -> Self {
        TpuConfig {
            rows: 128,
            cols: 128,
            frequency_hz: 700e6,
            sram_bytes: 24 << 20,
            dram_bandwidth_bytes_per_sec: default_dram_bandwidth(),
            pipeline_latency_cycles: default_pipeline_latency(),
            overlap_weight_fetch: false,
            restream_oversized_layers: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AcceleratorConfig {
    Epur(EPurConfig),
    Tpu(TpuConfig),
}

/// Cost of bringing one layer's weights on chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapCost {
    pub cycles: u64,
    pub dram_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LaneStats {
    pub lane_id: usize,
    pub useful_timesteps: u32,
    pub padded_timesteps: u32,
    /// Cycle (relative to the start of the batch-layer) from which the lane
    /// has no useful work left; `None` if it is busy until the end.
    pub idle_from_cycle: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchExecutionStats {
    pub layer_index: usize,
    pub lane_budget: u32,
    pub timestep_cycles: u64,
    /// Weight-fetch cycles on the critical path (0 when resident or overlapped).
    pub swap_cycles: u64,
    pub wall_cycles: u64,
    pub weights_swapped: bool,
    pub dram_weight_bytes: u64,
    pub dram_activation_bytes: u64,
    pub sram_weight_reads_bytes: u64,
    /// Bytes written into the weight buffer by the fetch.
    pub sram_weight_writes_bytes: u64,
    pub mac_count_useful: u64,
    pub mac_count_padded: u64,
    /// Padded MACs skipped because their lane was power gated.
    pub mac_count_gated: u64,
    /// Lane time-steps spent power gated.
    pub gated_lane_timesteps: u64,
    pub per_lane: Vec<LaneStats>,
}

impl BatchExecutionStats {
    pub fn active_lanes(&self) -> usize {
        self.per_lane.len()
    }

    pub fn useful_timesteps(&self) -> u64 {
        self.per_lane.iter().map(|l| l.useful_timesteps as u64).sum()
    }

    pub fn padded_timesteps(&self) -> u64 {
        self.per_lane.iter().map(|l| l.padded_timesteps as u64).sum()
    }
}

fn fetch_cycles(bytes: u64, bandwidth: f64, frequency_hz: f64) -> u64 {
    (bytes as f64 / bandwidth * frequency_hz).ceil() as u64
}

impl AcceleratorConfig {
    pub fn validate(&self) -> Result<()> {
        fn positive(field: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, "must be a positive number"))
            }
        }
        fn nonzero(field: &str, v: u64) -> Result<()> {
            if v > 0 {
                Ok(())
            } else {
                Err(Error::config(field, "must be >= 1"))
            }
        }
        match self {
            AcceleratorConfig::Epur(c) => {
                nonzero("accelerator.num_lanes", c.num_lanes as u64)?;
                nonzero("accelerator.dpu_width", c.dpu_width)?;
                nonzero("accelerator.num_compute_units", c.num_compute_units)?;
                nonzero("accelerator.weight_buffer_bytes", c.weight_buffer_bytes)?;
                positive("accelerator.frequency_hz", c.frequency_hz)?;
                positive(
                    "accelerator.dram_bandwidth_bytes_per_sec",
                    c.dram_bandwidth_bytes_per_sec,
                )?;
            }
            AcceleratorConfig::Tpu(c) => {
                nonzero("accelerator.rows", c.rows as u64)?;
                nonzero("accelerator.cols", c.cols)?;
                nonzero("accelerator.sram_bytes", c.sram_bytes)?;
                positive("accelerator.frequency_hz", c.frequency_hz)?;
                positive(
                    "accelerator.dram_bandwidth_bytes_per_sec",
                    c.dram_bandwidth_bytes_per_sec,
                )?;
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            AcceleratorConfig::Epur(_) => "epur",
            AcceleratorConfig::Tpu(_) => "tpu",
        }
    }

    /// Maximum number of sequences evaluated in parallel.
    pub fn num_lanes(&self) -> usize {
        match self {
            AcceleratorConfig::Epur(c) => c.num_lanes,
            AcceleratorConfig::Tpu(c) => c.rows,
        }
    }

    pub fn frequency_hz(&self) -> f64 {
        match self {
            AcceleratorConfig::Epur(c) => c.frequency_hz,
            AcceleratorConfig::Tpu(c) => c.frequency_hz,
        }
    }

    fn dram_bandwidth(&self) -> f64 {
        match self {
            AcceleratorConfig::Epur(c) => c.dram_bandwidth_bytes_per_sec,
            AcceleratorConfig::Tpu(c) => c.dram_bandwidth_bytes_per_sec,
        }
    }

    pub fn overlap_weight_fetch(&self) -> bool {
        match self {
            AcceleratorConfig::Epur(c) => c.overlap_weight_fetch,
            AcceleratorConfig::Tpu(c) => c.overlap_weight_fetch,
        }
    }

    fn restream_oversized_layers(&self) -> bool {
        match self {
            AcceleratorConfig::Epur(c) => c.restream_oversized_layers,
            AcceleratorConfig::Tpu(c) => c.restream_oversized_layers,
        }
    }

    /// Total on-chip weight storage.
    pub fn weight_capacity_bytes(&self) -> u64 {
        match self {
            AcceleratorConfig::Epur(c) => c.weight_buffer_bytes * c.num_compute_units,
            AcceleratorConfig::Tpu(c) => c.sram_bytes,
        }
    }

    /// Compute cycles for one time-step of `layer`, independent of how many
    /// lanes are active.
    pub fn timestep_cycles(&self, model: &RnnModel, layer: usize) -> Result<u64> {
        match self {
            AcceleratorConfig::Epur(c) => timestep_cycles_epur(c, model, layer),
            AcceleratorConfig::Tpu(c) => timestep_cycles_tpu(c, model, layer),
        }
    }

    pub fn layer_swap(&self, model: &RnnModel, layer: usize) -> Result<SwapCost> {
        let cost = model.layer_cost(layer)?;
        let dram_bytes = cost.weight_bytes + cost.bias_bytes;
        Ok(SwapCost {
            cycles: fetch_cycles(dram_bytes, self.dram_bandwidth(), self.frequency_hz()),
            dram_bytes,
        })
    }

    /// Bytes re-fetched every time-step when the layer overflows the buffer and
    /// restreaming is enabled.
    fn restream_bytes_per_timestep(&self, model: &RnnModel, layer: usize) -> Result<u64> {
        if !self.restream_oversized_layers() {
            return Ok(0);
        }
        let swap = self.layer_swap(model, layer)?;
        Ok(swap.dram_bytes.saturating_sub(self.weight_capacity_bytes()))
    }

    /// Effective cycles per time-step, accounting for restream bandwidth.
    pub fn effective_timestep_cycles(&self, model: &RnnModel, layer: usize) -> Result<u64> {
        let compute = self.timestep_cycles(model, layer)?;
        let restream = self.restream_bytes_per_timestep(model, layer)?;
        Ok(compute.max(fetch_cycles(restream, self.dram_bandwidth(), self.frequency_hz())))
    }

    /// Cycles the dispatch of `layer` will take for the given budget.
    pub fn layer_wall_cycles(&self, model: &RnnModel, layer: usize, budget: u32, resident: bool) -> Result<u64> {
        Ok(self.critical_swap_cycles(model, layer, resident)?
            + budget as u64 * self.effective_timestep_cycles(model, layer)?)
    }

    pub fn critical_swap_cycles(&self, model: &RnnModel, layer: usize, resident: bool) -> Result<u64> {
        if resident || self.overlap_weight_fetch() {
            Ok(0)
        } else {
            Ok(self.layer_swap(model, layer)?.cycles)
        }
    }

    /// Executes one layer of a dispatch and reports its cycles and traffic.
    pub fn execute_batch_layer(
        &self,
        model: &RnnModel,
        layer: usize,
        plan: &BatchPlan,
        weights_resident: bool,
    ) -> Result<BatchExecutionStats> {
        plan.validate(self.num_lanes())?;
        let cost = model.layer_cost(layer)?;
        let swap = self.layer_swap(model, layer)?;
        let timestep_cycles = self.effective_timestep_cycles(model, layer)?;
        let swap_cycles = self.critical_swap_cycles(model, layer, weights_resident)?;
        let budget = plan.lane_budget;

        let mut per_lane = Vec::with_capacity(plan.lanes.len());
        let mut useful = 0u64;
        let mut padded = 0u64;
        for lane in &plan.lanes {
            let u = lane.useful_timesteps();
            let end = lane.end_offset();
            per_lane.push(LaneStats {
                lane_id: lane.lane,
                useful_timesteps: u,
                padded_timesteps: budget - u,
                idle_from_cycle: (end < budget).then(|| swap_cycles + end as u64 * timestep_cycles),
            });
            useful += u as u64;
            padded += (budget - u) as u64;
        }
        let gated = if plan.power_gating { padded } else { 0 };

        let dram_weight_bytes = if weights_resident { 0 } else { swap.dram_bytes }
            + self.restream_bytes_per_timestep(model, layer)? * budget as u64;
        let activation_per_step = cost.input_bytes_per_timestep + cost.output_bytes_per_timestep;

        Ok(BatchExecutionStats {
            layer_index: layer,
            lane_budget: budget,
            timestep_cycles,
            swap_cycles,
            wall_cycles: swap_cycles + budget as u64 * timestep_cycles,
            weights_swapped: !weights_resident,
            dram_weight_bytes,
            dram_activation_bytes: activation_per_step * useful,
            sram_weight_reads_bytes: cost.weight_bytes * budget as u64,
            sram_weight_writes_bytes: dram_weight_bytes,
            mac_count_useful: cost.macs_per_timestep * useful,
            mac_count_padded: cost.macs_per_timestep * padded,
            mac_count_gated: cost.macs_per_timestep * gated,
            gated_lane_timesteps: gated,
            per_lane,
        })
    }
}

/// `ceil(G / CUs) * ceil(H * (I_eff + H) / dpu_width) + pipeline latency`.
/// With four compute units the gates of an LSTM or GRU cell run in parallel.
pub fn timestep_cycles_epur(cfg: &EPurConfig, model: &RnnModel, layer: usize) -> Result<u64> {
    model.check_layer(layer)?;
    let h = model.cell_size;
    let i_eff = model.layer_input_width(layer);
    let gate_passes = model.gate_count().div_ceil(cfg.num_compute_units);
    Ok(gate_passes * (h * (i_eff + h)).div_ceil(cfg.dpu_width) + cfg.pipeline_latency_cycles)
}

/// `ceil(G * H / cols) * (I_eff + H) + pipeline latency`.
pub fn timestep_cycles_tpu(cfg: &TpuConfig, model: &RnnModel, layer: usize) -> Result<u64> {
    model.check_layer(layer)?;
    let h = model.cell_size;
    let i_eff = model.layer_input_width(layer);
    let folds = (model.gate_count() * h).div_ceil(cfg.cols);
    Ok(folds * (i_eff + h) + cfg.pipeline_latency_cycles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CellType;
    use crate::sched::{LaneAssignment, LayerSpan};

    fn tiny(h: u64, i: u64) -> RnnModel {
        RnnModel {
            name: "tiny".into(),
            cell_type: CellType::LSTM,
            num_layers: 2,
            cell_size: h,
            input_size: i,
            bytes_per_weight: 2,
            bytes_per_activation: 2,
        }
    }

    fn lanes_plan(useful: &[u32], budget: u32) -> BatchPlan {
        BatchPlan {
            batch_id: 0,
            lanes: useful
                .iter()
                .enumerate()
                .map(|(i, &u)| {
                    let mut l = LaneAssignment::new(i);
                    l.push(i as u64, 0, u, 0);
                    l
                })
                .collect(),
            lane_budget: budget,
            layer_span: LayerSpan::AllLayers,
            joins_enabled: false,
            power_gating: false,
        }
    }

    #[test]
    fn epur_small_layer_and_single_pass() {
        let cfg = EPurConfig::default();
        assert_eq!(timestep_cycles_epur(&cfg, &tiny(64, 64), 0).unwrap(), 128 + 10);
        let wide = EPurConfig {
            dpu_width: 1 << 20,
            ..EPurConfig::default()
        };
        assert_eq!(timestep_cycles_epur(&wide, &tiny(64, 64), 0).unwrap(), 1 + 10);
    }

    #[test]
    fn tpu_single_fold() {
        let cfg = TpuConfig::default();
        // 4 gates * 32 neurons fit in 128 columns.
        assert_eq!(timestep_cycles_tpu(&cfg, &tiny(32, 16), 0).unwrap(), 48 + 10);
    }

    #[test]
    fn one_lane_one_step() {
        let acc = AcceleratorConfig::Epur(EPurConfig::default());
        let m = tiny(64, 64);
        let s = acc.execute_batch_layer(&m, 0, &lanes_plan(&[1], 1), false).unwrap();
        let swap = acc.layer_swap(&m, 0).unwrap().cycles;
        assert_eq!(s.wall_cycles, swap + 138);
        assert_eq!(s.mac_count_padded, 0);
        assert_eq!(s.per_lane[0].idle_from_cycle, None);
    }

    #[test]
    fn resident_weights_skip_fetch() {
        let acc = AcceleratorConfig::Epur(EPurConfig::default());
        let m = tiny(64, 64);
        let s = acc.execute_batch_layer(&m, 1, &lanes_plan(&[3, 1], 3), true).unwrap();
        assert_eq!(s.dram_weight_bytes, 0);
        assert_eq!(s.wall_cycles, 3 * 138);
        assert_eq!(s.per_lane[1].idle_from_cycle, Some(138));
    }

    #[test]
    fn lane_out_of_range() {
        let acc = AcceleratorConfig::Epur(EPurConfig {
            num_lanes: 2,
            ..EPurConfig::default()
        });
        let err = acc.execute_batch_layer(&tiny(8, 8), 0, &lanes_plan(&[1, 1, 1], 1), false);
        assert!(matches!(err, Err(Error::LaneOutOfRange { lane: 2, num_lanes: 2 })));
    }

    #[test]
    fn zero_bandwidth_is_invalid() {
        let acc = AcceleratorConfig::Epur(EPurConfig {
            dram_bandwidth_bytes_per_sec: 0.0,
            ..EPurConfig::default()
        });
        assert!(acc.validate().is_err());
    }

    #[test]
    fn overlap_hides_fetch() {
        let acc = AcceleratorConfig::Epur(EPurConfig {
            overlap_weight_fetch: true,
            ..EPurConfig::default()
        });
        let m = tiny(64, 64);
        let s = acc.execute_batch_layer(&m, 0, &lanes_plan(&[2], 2), false).unwrap();
        assert_eq!(s.wall_cycles, 2 * 138);
        assert!(s.dram_weight_bytes > 0);
    }

    #[test]
    fn restreaming_charges_overflow_per_step() {
        let base = EPurConfig {
            weight_buffer_bytes: 1024,
            num_compute_units: 4,
            restream_oversized_layers: true,
            ..EPurConfig::default()
        };
        let acc = AcceleratorConfig::Epur(base);
        let m = tiny(64, 64);
        let swap = acc.layer_swap(&m, 0).unwrap().dram_bytes;
        let s = acc.execute_batch_layer(&m, 0, &lanes_plan(&[3], 3), true).unwrap();
        assert_eq!(s.dram_weight_bytes, 3 * (swap - 4096));
    }

    #[test]
    fn config_json_roundtrip_rejects_unknown_fields() {
        let json = r#"{"kind":"tpu","rows":128,"cols":128,"frequency_hz":7e8,"sram_bytes":25165824}"#;
        let cfg: AcceleratorConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg, AcceleratorConfig::Tpu(TpuConfig::default()));
        let bad = r#"{"kind":"tpu","rows":128,"cols":128,"frequency_hz":7e8,"sram_bytes":1,"bogus":1}"#;
        assert!(serde_json::from_str::<AcceleratorConfig>(bad).is_err());
    }
}
