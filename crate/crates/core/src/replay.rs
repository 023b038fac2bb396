//! Hand-encoded micro-scenarios for the textbook batching schedules, with
//! their event logs pinned as golden files.
//!
//! Every scenario runs a one-neuron model on a four-lane E-PUR clocked at
//! 1 Hz with weight fetches overlapped, so one time-step takes exactly one
//! second and log timestamps read as step boundaries.

use std::path::{Path, PathBuf};

use crate::accel::{AcceleratorConfig, EPurConfig};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::model::{CellType, RnnModel};
use crate::sched::{BucketingMode, PolicyConfig};
use crate::sim::{Engine, SimConfig};
use crate::workload::Request;

/// Directory the golden logs are read from at build time and blessed into.
pub const GOLDEN_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/golden");

const GOLDEN: [(&str, &str); 5] = [
    ("padding", include_str!("../golden/padding.log")),
    ("bucketing", include_str!("../golden/bucketing.log")),
    ("cellular", include_str!("../golden/cellular.log")),
    ("ebatch_example", include_str!("../golden/ebatch_example.log")),
    ("ebatch_example2", include_str!("../golden/ebatch_example2.log")),
];

#[derive(Debug, Clone)]
pub struct MicroScenario {
    pub name: &'static str,
    pub model: RnnModel,
    pub accelerator: AcceleratorConfig,
    pub policy: PolicyConfig,
    /// (arrival time in steps, length in steps); ids count from 1.
    pub requests: Vec<(f64, u32)>,
}

fn unit_model(num_layers: usize) -> RnnModel {
    RnnModel {
        name: "unit".into(),
        cell_type: CellType::LSTM,
        num_layers,
        cell_size: 1,
        input_size: 1,
        bytes_per_weight: 2,
        bytes_per_activation: 2,
    }
}

fn unit_accelerator() -> AcceleratorConfig {
    AcceleratorConfig::Epur(EPurConfig {
        num_lanes: 4,
        frequency_hz: 1.0,
        pipeline_latency_cycles: 0,
        overlap_weight_fetch: true,
        ..EPurConfig::default()
    })
}

impl MicroScenario {
    fn new(name: &'static str, layers: usize, policy: PolicyConfig, requests: &[(f64, u32)]) -> Self {
        MicroScenario {
            name,
            model: unit_model(layers),
            accelerator: unit_accelerator(),
            policy,
            requests: requests.to_vec(),
        }
    }

    pub fn trace(&self) -> Vec<Request> {
        self.requests
            .iter()
            .enumerate()
            .map(|(i, &(t, len))| Request {
                id: i as u64 + 1,
                arrival_time: t,
                total_time_steps: len,
                model_id: 0,
            })
            .collect()
    }

    /// Runs the scenario to quiescence and returns its event log.
    pub fn run(&self) -> Result<String> {
        let sim = SimConfig {
            duration: 100.0,
            warmup_fraction: 0.0,
            ..SimConfig::default()
        };
        let energy = EnergyModel::default();
        let (_, log) = Engine::new(&self.model, &self.accelerator, &self.policy, &energy, &sim)
            .with_log()
            .run(&self.trace())?;
        let mut out = log.join("\n");
        out.push('\n');
        Ok(out)
    }

    pub fn golden(&self) -> Option<&'static str> {
        GOLDEN.iter().find(|(n, _)| *n == self.name).map(|(_, g)| *g)
    }
}

/// The five scenarios: padding, bucketing, cellular, then the two E-Batch ones.
pub fn scenarios() -> Vec<MicroScenario> {
    let mut bucketing = PolicyConfig::bucketing(4, 1);
    bucketing.bucketing_mode = BucketingMode::Centered;
    vec![
        MicroScenario::new(
            "padding",
            1,
            PolicyConfig::padding(4),
            &[(0.0, 1), (0.0, 2), (0.0, 3), (0.0, 4), (1.5, 3), (2.5, 2)],
        ),
        MicroScenario::new(
            "bucketing",
            1,
            bucketing,
            &[(0.0, 1), (0.0, 2), (0.0, 4), (0.0, 5), (0.0, 3), (1.0, 2)],
        ),
        MicroScenario::new(
            "cellular",
            1,
            PolicyConfig::cellular(4, 1),
            &[(0.0, 1), (0.0, 2), (0.0, 3), (0.0, 4), (0.5, 3), (1.5, 2)],
        ),
        MicroScenario::new(
            "ebatch_example",
            1,
            PolicyConfig::ebatch(4, 3, 2000.0),
            &[
                (0.0, 1),
                (0.0, 2),
                (0.0, 3),
                (0.0, 5),
                (0.5, 5),
                (1.5, 2),
                (4.0, 2),
                (4.0, 2),
            ],
        ),
        MicroScenario::new(
            "ebatch_example2",
            2,
            PolicyConfig::ebatch(4, 3, 2000.0),
            &[(0.0, 1), (0.0, 2), (0.0, 3), (0.0, 5), (0.5, 5), (3.5, 2), (3.5, 2)],
        ),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub name: &'static str,
    /// `None` when the log matches its golden file.
    pub diff: Option<String>,
}

impl ReplayOutcome {
    pub fn passed(&self) -> bool {
        self.diff.is_none()
    }
}

/// Line diff of `expected` against `actual`: `-` lines only in the golden
/// log, `+` lines only in the actual one, starting at the first divergence.
pub fn diff_logs(expected: &str, actual: &str) -> Option<String> {
    if expected == actual {
        return None;
    }
    let e: Vec<&str> = expected.lines().collect();
    let a: Vec<&str> = actual.lines().collect();
    let first = e.iter().zip(&a).take_while(|(x, y)| x == y).count();
    let mut out = format!("first divergence at line {}\n", first + 1);
    for line in e.iter().skip(first).take(12) {
        out.push_str(&format!("- {line}\n"));
    }
    for line in a.iter().skip(first).take(12) {
        out.push_str(&format!("+ {line}\n"));
    }
    Some(out)
}

/// Replays `scenario` against its embedded golden log.
pub fn check(scenario: &MicroScenario) -> Result<ReplayOutcome> {
    let actual = scenario.run()?;
    let golden = scenario
        .golden()
        .ok_or_else(|| Error::config("replay", format!("no golden log for {}", scenario.name)))?;
    Ok(ReplayOutcome {
        name: scenario.name,
        diff: diff_logs(golden, &actual),
    })
}

pub fn check_all() -> Result<Vec<ReplayOutcome>> {
    scenarios().iter().map(check).collect()
}

pub fn golden_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.log"))
}

/// Rewrites every golden log in `dir` from the current simulator. The new
/// logs are embedded on the next build.
pub fn bless(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for s in scenarios() {
        let path = golden_path(dir, s.name);
        std::fs::write(&path, s.run()?).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}
