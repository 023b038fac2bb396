//! Scenario files: one JSON document naming the model, accelerator, energy
//! constants, one or more policies, the workload and the simulation window.
//!
//! ```json
//! {
//!   "model": "models/mnmt.json",
//!   "accelerator": { "kind": "epur" },
//!   "energy": {},
//!   "policy": [{ "policy": "padding", "batch_size": 64 },
//!              { "policy": "ebatch", "batch_size": 64, "max_timesteps_per_lane": 512 }],
//!   "workload": { "arrival_rate": 500,
//!                 "length_distribution": { "kind": "cdf_file", "path": "data/nmt_like_cdf.csv" } },
//!   "sim": { "duration": 600, "seed": 7 }
//! }
//! ```
//!
//! Relative paths resolve against the scenario file's directory. Unknown keys
//! anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accel::AcceleratorConfig;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::model::RnnModel;
use crate::sched::PolicyConfig;
use crate::sim::{Engine, MetricsReport, SimConfig};
use crate::workload::{generate_trace, LengthDistribution, Request, TraceConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ModelSpec {
    Path(PathBuf),
    Inline(RnnModel),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LengthSpec {
    Empirical { points: Vec<(u32, f64)> },
    Uniform { min: u32, max: u32 },
    Constant { value: u32 },
    CdfFile { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadSpec {
    arrival_rate: f64,
    length_distribution: LengthSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    model: ModelSpec,
    accelerator: AcceleratorConfig,
    #[serde(default)]
    energy: EnergyModel,
    policy: OneOrMany<PolicyConfig>,
    workload: WorkloadSpec,
    #[serde(default)]
    sim: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub arrival_rate: f64,
    pub length_distribution: LengthDistribution,
}

/// A fully resolved, validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: RnnModel,
    pub accelerator: AcceleratorConfig,
    pub energy: EnergyModel,
    pub policies: Vec<PolicyConfig>,
    pub workload: Workload,
    pub sim: SimConfig,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = read(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, base, path)
    }

    /// Parses scenario JSON; `base` anchors relative paths, `origin` is used
    /// in error messages.
    pub fn from_json(text: &str, base: &Path, origin: &Path) -> Result<Scenario> {
        let file: ScenarioFile = parse(text, origin)?;
        let model = match file.model {
            ModelSpec::Inline(m) => m,
            ModelSpec::Path(p) => {
                let p = resolve(base, &p);
                parse(&read(&p)?, &p)?
            }
        };
        let length_distribution = match file.workload.length_distribution {
            LengthSpec::Empirical { points } => LengthDistribution::Empirical { points },
            LengthSpec::Uniform { min, max } => LengthDistribution::Uniform { min, max },
            LengthSpec::Constant { value } => LengthDistribution::Constant { value },
            LengthSpec::CdfFile { path } => LengthDistribution::from_cdf_file(resolve(base, &path))?,
        };
        let policies = match file.policy {
            OneOrMany::One(p) => vec![p],
            OneOrMany::Many(v) => v,
        };
        let scenario = Scenario {
            model,
            accelerator: file.accelerator,
            energy: file.energy,
            policies,
            workload: Workload {
                arrival_rate: file.workload.arrival_rate,
                length_distribution,
            },
            sim: file.sim,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.accelerator.validate()?;
        self.energy.validate()?;
        self.sim.validate()?;
        if self.policies.is_empty() {
            return Err(Error::config("policy", "at least one policy is required"));
        }
        for p in &self.policies {
            p.validate(self.accelerator.num_lanes())?;
        }
        self.trace_config(self.workload.arrival_rate).validate()
    }

    pub fn trace_config(&self, arrival_rate: f64) -> TraceConfig {
        TraceConfig {
            arrival_rate,
            duration: self.sim.duration,
            length_distribution: self.workload.length_distribution.clone(),
            seed: self.sim.seed,
        }
    }

    pub fn trace(&self, arrival_rate: f64) -> Result<Vec<Request>> {
        generate_trace(&self.trace_config(arrival_rate))
    }

    /// Simulates `policy` at `arrival_rate` once, without the convergence guard.
    pub fn run_once(&self, policy: &PolicyConfig, arrival_rate: f64) -> Result<MetricsReport> {
        let trace = self.trace(arrival_rate)?;
        let engine = Engine::new(&self.model, &self.accelerator, policy, &self.energy, &self.sim);
        Ok(engine.offered_load(arrival_rate).run(&trace)?.0)
    }

    /// Like [`Scenario::run_once`], also returning the event log.
    pub fn run_logged(&self, policy: &PolicyConfig, arrival_rate: f64) -> Result<(MetricsReport, Vec<String>)> {
        let trace = self.trace(arrival_rate)?;
        Engine::new(&self.model, &self.accelerator, policy, &self.energy, &self.sim)
            .offered_load(arrival_rate)
            .with_log()
            .run(&trace)
    }

    /// Simulates `policy` at `arrival_rate`. Sustainable runs whose mean
    /// latency has not converged are repeated with a 1.5x longer horizon, up
    /// to `sim.max_extensions` times.
    pub fn run_policy(&self, policy: &PolicyConfig, arrival_rate: f64) -> Result<MetricsReport> {
        let mut scenario = self.clone();
        let mut report = scenario.run_once(policy, arrival_rate)?;
        for _ in 0..self.sim.max_extensions {
            if !report.sustainable || report.latency_rel_half_width <= self.sim.target_rel_half_width {
                break;
            }
            scenario.sim.duration *= 1.5;
            report = scenario.run_once(policy, arrival_rate)?;
        }
        Ok(report)
    }

    /// Every configured policy at the configured arrival rate.
    pub fn run_all(&self) -> Result<Vec<MetricsReport>> {
        self.policies
            .iter()
            .map(|p| self.run_policy(p, self.workload.arrival_rate))
            .collect()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sim.seed = seed;
        self
    }
}
