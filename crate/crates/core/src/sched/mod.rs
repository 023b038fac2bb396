//! Batching policies and the runtime state that drives them.
//!
//! [`Scheduler`] owns the waiting queue and applies the pure rules in
//! [`policies`] to it. The simulator asks it for the next plan whenever the
//! accelerator is free, forwards lane-idle interrupts to it while the first
//! layer of an E-Batch dispatch runs, and hands each plan back once its last
//! layer completes.

pub mod partition;
pub mod plan;
pub mod policies;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::{Request, RequestId};

pub use partition::{greedy_partition, lane_totals};
pub use plan::{BatchPlan, LaneAssignment, LayerSpan, Segment};
pub use policies::{
    form_batch_bucketing, form_batch_ebatch, form_batch_padding, step_cellular, BucketingMode, CellProgress,
    QueuedRequest,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Padding,
    Bucketing,
    Cellular,
    Ebatch,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Padding => "padding",
            PolicyKind::Bucketing => "bucketing",
            PolicyKind::Cellular => "cellular",
            PolicyKind::Ebatch => "ebatch",
        })
    }
}

fn default_cell() -> u32 {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub policy: PolicyKind,
    /// Name used in reports; derived from the policy and its knobs if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Lanes used per dispatch.
    pub batch_size: usize,
    #[serde(default)]
    pub bucket_width: u32,
    #[serde(default)]
    pub bucketing_mode: BucketingMode,
    #[serde(default = "default_cell")]
    pub cell_granularity: u32,
    /// E-Batch per-lane time-step cap `N`; 0 means the longest sequence.
    #[serde(default)]
    pub max_timesteps_per_lane: u32,
    /// Batch-fill wait `T` in milliseconds of simulated time.
    #[serde(default)]
    pub timeout_ms: f64,
    /// E-Batch only: refill idle lanes during the first layer.
    #[serde(default = "default_true")]
    pub lane_refill: bool,
}

impl PolicyConfig {
    pub fn new(policy: PolicyKind, batch_size: usize) -> Self {
        PolicyConfig {
            policy,
            label: None,
            batch_size,
            bucket_width: 0,
            bucketing_mode: BucketingMode::default(),
            cell_granularity: 1,
            max_timesteps_per_lane: 0,
            timeout_ms: 0.0,
            lane_refill: true,
        }
    }

    pub fn padding(batch_size: usize) -> Self {
        Self::new(PolicyKind::Padding, batch_size)
    }

    pub fn bucketing(batch_size: usize, bucket_width: u32) -> Self {
        PolicyConfig {
            bucket_width,
            ..Self::new(PolicyKind::Bucketing, batch_size)
        }
    }

    pub fn cellular(batch_size: usize, cell_granularity: u32) -> Self {
        PolicyConfig {
            cell_granularity,
            ..Self::new(PolicyKind::Cellular, batch_size)
        }
    }

    pub fn ebatch(batch_size: usize, n: u32, timeout_ms: f64) -> Self {
        PolicyConfig {
            max_timesteps_per_lane: n,
            timeout_ms,
            ..Self::new(PolicyKind::Ebatch, batch_size)
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.policy {
            PolicyKind::Padding => "padding".into(),
            PolicyKind::Bucketing => format!("bucketing_w{}", self.bucket_width),
            PolicyKind::Cellular => format!("cellular_c{}", self.cell_granularity),
            PolicyKind::Ebatch => format!("ebatch_n{}", self.max_timesteps_per_lane),
        }
    }

    pub fn validate(&self, accelerator_lanes: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("policy.batch_size", "must be >= 1"));
        }
        if self.batch_size > accelerator_lanes {
            return Err(Error::config(
                "policy.batch_size",
                format!(
                    "{} exceeds the accelerator's {} lanes",
                    self.batch_size, accelerator_lanes
                ),
            ));
        }
        if self.cell_granularity == 0 {
            return Err(Error::config("policy.cell_granularity", "must be >= 1"));
        }
        if !(self.timeout_ms >= 0.0 && self.timeout_ms.is_finite()) {
            return Err(Error::config("policy.timeout_ms", "must be a non-negative number"));
        }
        Ok(())
    }

    pub fn timeout_s(&self) -> f64 {
        self.timeout_ms * 1e-3
    }
}

/// Accelerator-side bookkeeping for a running dispatch: which lane holds which
/// request and how many of its time-steps are left to evaluate in this batch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequestBuffer {
    lanes: BTreeMap<usize, Vec<(RequestId, u32)>>,
}

impl RequestBuffer {
    pub fn from_plan(plan: &BatchPlan) -> Self {
        let lanes = plan
            .lanes
            .iter()
            .map(|l| {
                (
                    l.lane,
                    l.segments.iter().map(|s| (s.request, s.num_timesteps)).collect(),
                )
            })
            .collect();
        RequestBuffer { lanes }
    }

    pub fn push(&mut self, lane: usize, request: RequestId, num_timesteps: u32) {
        self.lanes.entry(lane).or_default().push((request, num_timesteps));
    }

    pub fn lane(&self, lane: usize) -> &[(RequestId, u32)] {
        self.lanes.get(&lane).map_or(&[], Vec::as_slice)
    }

    pub fn total_timesteps(&self) -> u64 {
        self.lanes.values().flatten().map(|&(_, n)| n as u64).sum()
    }
}

/// Runtime side of a batching policy.
#[derive(Debug, Clone)]
pub struct Scheduler {
    cfg: PolicyConfig,
    num_layers: usize,
    queue: BTreeMap<RequestId, QueuedRequest>,
    /// Residual tails of requests split by the running dispatch; they rejoin
    /// the queue once it finishes.
    deferred: Vec<QueuedRequest>,
    /// Requests whose last time-step runs in the current dispatch.
    finishing: Vec<RequestId>,
    running: BTreeMap<RequestId, CellProgress>,
    next_batch_id: u64,
}

impl Scheduler {
    pub fn new(cfg: PolicyConfig, num_layers: usize) -> Self {
        Scheduler {
            cfg,
            num_layers,
            queue: BTreeMap::new(),
            deferred: Vec::new(),
            finishing: Vec::new(),
            running: BTreeMap::new(),
            next_batch_id: 0,
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn enqueue(&mut self, r: &Request) {
        if self.cfg.policy == PolicyKind::Cellular {
            self.running.insert(r.id, CellProgress::new(r.id, r.total_time_steps));
        } else {
            self.queue.insert(
                r.id,
                QueuedRequest {
                    id: r.id,
                    arrival_time: r.arrival_time,
                    total_time_steps: r.total_time_steps,
                    done_time_steps: 0,
                },
            );
        }
    }

    /// Requests the next dispatch could draw from.
    pub fn waiting(&self) -> usize {
        match self.cfg.policy {
            PolicyKind::Cellular => self.running.len(),
            _ => self.queue.len(),
        }
    }

    /// Whether the batch-fill timeout should hold back a dispatch now.
    pub fn should_wait(&self) -> bool {
        self.cfg.policy != PolicyKind::Cellular && self.cfg.timeout_ms > 0.0 && self.queue.len() < self.cfg.batch_size
    }

    pub fn oldest_waiting(&self) -> Option<&QueuedRequest> {
        self.queue.values().next()
    }

    /// Forms the next dispatch and removes its work from the queue.
    pub fn next_plan(&mut self) -> Option<BatchPlan> {
        debug_assert!(self.deferred.is_empty() && self.finishing.is_empty());
        let batch_id = self.next_batch_id;
        let plan = match self.cfg.policy {
            PolicyKind::Cellular => step_cellular(
                self.running.values(),
                self.cfg.batch_size,
                self.cfg.cell_granularity,
                batch_id,
            )?,
            policy => {
                if self.queue.is_empty() {
                    return None;
                }
                let queue: Vec<QueuedRequest> = match policy {
                    // Only the oldest `batch_size` are ever candidates.
                    PolicyKind::Padding => self.queue.values().take(self.cfg.batch_size).copied().collect(),
                    _ => self.queue.values().copied().collect(),
                };
                let mut plan = match policy {
                    PolicyKind::Padding => form_batch_padding(&queue, self.cfg.batch_size, batch_id),
                    PolicyKind::Bucketing => form_batch_bucketing(
                        &queue,
                        self.cfg.batch_size,
                        self.cfg.bucket_width,
                        self.cfg.bucketing_mode,
                        batch_id,
                    ),
                    _ => form_batch_ebatch(&queue, self.cfg.batch_size, self.cfg.max_timesteps_per_lane, batch_id),
                };
                plan.joins_enabled &= self.cfg.lane_refill;
                let assigned: Vec<(RequestId, u32)> =
                    plan.segments().map(|(_, s)| (s.request, s.num_timesteps)).collect();
                for (id, steps) in assigned {
                    self.take(id, steps);
                }
                plan
            }
        };
        self.next_batch_id += 1;
        Some(plan)
    }

    fn take(&mut self, id: RequestId, steps: u32) {
        let mut r = self.queue.remove(&id).expect("planned request is queued");
        if steps >= r.remaining() {
            self.finishing.push(id);
        } else {
            r.done_time_steps += steps;
            self.deferred.push(r);
        }
    }

    /// Handles a lane-idle interrupt for `lane`, which ran out of work at
    /// dispatch-relative step `at`. Returns the segment appended to the lane,
    /// or `None` if the lane should be power gated.
    pub fn refill(
        &mut self,
        plan: &mut BatchPlan,
        lane: usize,
        at: u32,
        current_layer: usize,
    ) -> Result<Option<Segment>> {
        let first_layer = match plan.layer_span {
            LayerSpan::AllLayers => 0,
            LayerSpan::Layers { first, .. } => first,
        };
        if current_layer != first_layer || !plan.joins_enabled {
            return Err(Error::JoinAfterFirstLayer(current_layer));
        }
        let room = plan.lane_budget.saturating_sub(at);
        if room == 0 {
            return Ok(None);
        }
        let Some((&id, r)) = self.queue.iter().next() else {
            return Ok(None);
        };
        let steps = r.remaining().min(room);
        let start = r.done_time_steps;
        let budget = plan.lane_budget;
        let lanes = plan.lanes.len();
        let assignment = match plan.lane_mut(lane) {
            Some(a) => a,
            None => {
                return Err(Error::LaneOutOfRange { lane, num_lanes: lanes });
            }
        };
        if assignment.end_offset() > at {
            return Err(Error::Plan(format!("lane {lane} is still busy at step {at}")));
        }
        assignment.push(id, start, steps, at);
        debug_assert!(assignment.end_offset() <= budget);
        let seg = *assignment.segments.last().expect("just pushed");
        self.take(id, steps);
        Ok(Some(seg))
    }

    /// Retires a finished dispatch. Returns the requests that completed.
    pub fn complete(&mut self, plan: &BatchPlan) -> Vec<RequestId> {
        match self.cfg.policy {
            PolicyKind::Cellular => {
                let mut done = Vec::new();
                for (_, s) in plan.segments() {
                    let r = self.running.get_mut(&s.request).expect("running request");
                    if r.advance(self.cfg.cell_granularity, self.num_layers) {
                        self.running.remove(&s.request);
                        done.push(s.request);
                    }
                }
                done
            }
            _ => {
                for r in self.deferred.drain(..) {
                    self.queue.insert(r.id, r);
                }
                let mut done = std::mem::take(&mut self.finishing);
                done.sort_unstable();
                done
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(id: u64, t: f64, len: u32) -> Request {
        Request {
            id,
            arrival_time: t,
            total_time_steps: len,
            model_id: 0,
        }
    }

    #[test]
    fn labels_and_validation() {
        assert_eq!(PolicyConfig::ebatch(64, 512, 1.0).label(), "ebatch_n512");
        assert_eq!(PolicyConfig::padding(4).with_label("pad").label(), "pad");
        let err = PolicyConfig::padding(65).validate(64).unwrap_err();
        assert!(err.to_string().contains("policy.batch_size"));
        assert!(PolicyConfig::cellular(4, 0).validate(4).is_err());
    }

    #[test]
    fn unknown_policy_field_is_rejected() {
        let ok = r#"{"policy":"ebatch","batch_size":4,"max_timesteps_per_lane":3}"#;
        assert!(serde_json::from_str::<PolicyConfig>(ok).is_ok());
        let bad = r#"{"policy":"ebatch","batch_size":4,"N":3}"#;
        assert!(serde_json::from_str::<PolicyConfig>(bad).is_err());
    }

    #[test]
    fn split_residual_returns_after_batch() {
        let mut s = Scheduler::new(PolicyConfig::ebatch(2, 3, 0.0), 1);
        s.enqueue(&req(1, 0.0, 5));
        s.enqueue(&req(2, 0.0, 2));
        let plan = s.next_plan().unwrap();
        assert_eq!(plan.lane_budget, 3);
        assert_eq!(s.waiting(), 0);
        assert_eq!(s.complete(&plan), vec![2]);
        let r = s.oldest_waiting().unwrap();
        assert_eq!((r.id, r.done_time_steps, r.remaining()), (1, 3, 2));
    }

    #[test]
    fn refill_caps_at_budget_and_rejects_later_layers() {
        let mut s = Scheduler::new(PolicyConfig::ebatch(2, 3, 0.0), 2);
        s.enqueue(&req(1, 0.0, 3));
        s.enqueue(&req(2, 0.0, 1));
        let mut plan = s.next_plan().unwrap();
        s.enqueue(&req(3, 0.5, 4));
        let seg = s.refill(&mut plan, 1, 1, 0).unwrap().unwrap();
        assert_eq!((seg.request, seg.num_timesteps, seg.lane_offset), (3, 2, 1));
        plan.validate(2).unwrap();
        s.enqueue(&req(4, 0.6, 1));
        assert!(matches!(
            s.refill(&mut plan, 1, 3, 1),
            Err(Error::JoinAfterFirstLayer(1))
        ));
        assert_eq!(s.refill(&mut plan, 1, 3, 0).unwrap(), None);
        let done = s.complete(&plan);
        assert_eq!(done, vec![1, 2]);
        let ids: Vec<u64> = s.queue.keys().copied().collect();
        assert_eq!(ids, [3, 4]);
    }

    #[test]
    fn empty_queue_gates() {
        let mut s = Scheduler::new(PolicyConfig::ebatch(2, 0, 0.0), 1);
        s.enqueue(&req(1, 0.0, 2));
        let mut plan = s.next_plan().unwrap();
        assert_eq!(s.refill(&mut plan, 1, 0, 0).unwrap(), None);
    }

    #[test]
    fn request_buffer_tracks_lanes() {
        let mut s = Scheduler::new(PolicyConfig::ebatch(2, 0, 0.0), 1);
        for (i, l) in [4, 3, 1].iter().enumerate() {
            s.enqueue(&req(i as u64, 0.0, *l));
        }
        let plan = s.next_plan().unwrap();
        let buf = RequestBuffer::from_plan(&plan);
        assert_eq!(buf.lane(0), &[(0, 4)]);
        assert_eq!(buf.lane(1), &[(1, 3), (2, 1)]);
        assert_eq!(buf.total_timesteps(), 8);
    }

    #[test]
    fn timeout_holds_underfull_queue() {
        let mut s = Scheduler::new(PolicyConfig::ebatch(2, 0, 5.0), 1);
        s.enqueue(&req(1, 0.0, 2));
        assert!(s.should_wait());
        s.enqueue(&req(2, 0.0, 2));
        assert!(!s.should_wait());
        let s = Scheduler::new(PolicyConfig::padding(2), 1);
        assert!(!s.should_wait());
    }
}
