//! Discrete-event simulation of batched RNN inference on accelerator models.
//!
//! The crate is organised bottom-up: [`model`] and [`accel`] turn a batch plan
//! into cycles, bytes and MACs; [`energy`] turns those into joules; [`sched`]
//! holds the batching policies; [`sim`] drives them with a request trace from
//! [`workload`] and reports [`MetricsReport`]s.

pub mod accel;
pub mod energy;
pub mod error;
pub mod model;
pub mod replay;
pub mod report;
pub mod scenario;
pub mod sched;
pub mod sim;
pub mod workload;

pub use accel::{AcceleratorConfig, BatchExecutionStats, EPurConfig, TpuConfig};
pub use energy::{batch_energy, EnergyBreakdown, EnergyModel};
pub use error::{Error, Result};
pub use model::{CellType, LayerCost, RnnModel};
pub use report::{compare, write_report_csv, write_report_json, Comparison, ReportRow};
pub use scenario::{Scenario, Workload};
pub use sched::{BatchPlan, BucketingMode, PolicyConfig, PolicyKind, Scheduler};
pub use sim::{find_saturation, run_scenario, saturation_sweep, Engine, MetricsReport, Saturation, SimConfig};
pub use workload::{generate_trace, LengthDistribution, Request, TraceConfig};
