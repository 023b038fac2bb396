use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::workload::RequestId;

/// A contiguous run of one request's time-steps on one lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub request: RequestId,
    /// Index of the first time-step of the request covered by this segment.
    pub start_timestep: u32,
    pub num_timesteps: u32,
    /// Dispatch-relative step at which the lane starts this segment.
    pub lane_offset: u32,
}

impl Segment {
    pub fn lane_end(&self) -> u32 {
        self.lane_offset + self.num_timesteps
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LaneAssignment {
    pub lane: usize,
    pub segments: Vec<Segment>,
}

impl LaneAssignment {
    pub fn new(lane: usize) -> Self {
        LaneAssignment {
            lane,
            segments: Vec::new(),
        }
    }

    pub fn useful_timesteps(&self) -> u32 {
        self.segments.iter().map(|s| s.num_timesteps).sum()
    }

    /// Offset at which the lane runs out of work.
    pub fn end_offset(&self) -> u32 {
        self.segments.last().map_or(0, Segment::lane_end)
    }

    /// Appends `num_timesteps` of `request` right after the lane's last segment
    /// (or at `at`, whichever is later).
    pub fn push(&mut self, request: RequestId, start_timestep: u32, num_timesteps: u32, at: u32) {
        let lane_offset = self.end_offset().max(at);
        self.segments.push(Segment {
            request,
            start_timestep,
            num_timesteps,
            lane_offset,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpan {
    AllLayers,
    /// Inclusive layer range.
    Layers {
        first: usize,
        last: usize,
    },
}

impl LayerSpan {
    pub fn first_layer_only() -> Self {
        LayerSpan::Layers { first: 0, last: 0 }
    }

    pub fn single(layer: usize) -> Self {
        LayerSpan::Layers {
            first: layer,
            last: layer,
        }
    }

    pub fn layers(&self, num_layers: usize) -> Vec<usize> {
        match *self {
            LayerSpan::AllLayers => (0..num_layers).collect(),
            LayerSpan::Layers { first, last } => (first..=last.min(num_layers.saturating_sub(1))).collect(),
        }
    }
}

/// Lane to request-segment assignment for one accelerator dispatch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchPlan {
    pub batch_id: u64,
    pub lanes: Vec<LaneAssignment>,
    /// Time-steps every lane is clocked for in the dispatch's first layer.
    pub lane_budget: u32,
    pub layer_span: LayerSpan,
    /// Idle lanes may be refilled while the first layer executes.
    pub joins_enabled: bool,
    /// Lanes without work are power gated instead of computing padding.
    pub power_gating: bool,
}

impl BatchPlan {
    pub fn useful_timesteps(&self) -> u64 {
        self.lanes.iter().map(|l| l.useful_timesteps() as u64).sum()
    }

    pub fn padded_timesteps(&self) -> u64 {
        self.lanes
            .iter()
            .map(|l| (self.lane_budget - l.useful_timesteps().min(self.lane_budget)) as u64)
            .sum()
    }

    pub fn segments(&self) -> impl Iterator<Item = (usize, &Segment)> {
        self.lanes
            .iter()
            .flat_map(|l| l.segments.iter().map(move |s| (l.lane, s)))
    }

    pub fn lane_mut(&mut self, lane: usize) -> Option<&mut LaneAssignment> {
        self.lanes.iter_mut().find(|l| l.lane == lane)
    }

    /// The plan executed by layers after the first: lanes keep their
    /// requests in order, gaps left by late joins are closed, and lanes with
    /// no work drop out. The budget shrinks to the busiest lane.
    pub fn locked(&self) -> BatchPlan {
        let lanes: Vec<LaneAssignment> = self
            .lanes
            .iter()
            .filter(|l| !l.segments.is_empty())
            .map(|l| {
                let mut packed = LaneAssignment::new(l.lane);
                for s in &l.segments {
                    packed.push(s.request, s.start_timestep, s.num_timesteps, 0);
                }
                packed
            })
            .collect();
        let lane_budget = lanes.iter().map(LaneAssignment::useful_timesteps).max().unwrap_or(0);
        BatchPlan {
            batch_id: self.batch_id,
            lanes,
            lane_budget,
            layer_span: self.layer_span,
            joins_enabled: false,
            power_gating: self.power_gating,
        }
    }

    /// Structural checks: lanes in range and unique, segments sequential and
    /// within budget, every request on at most one lane.
    pub fn validate(&self, num_lanes: usize) -> Result<()> {
        let mut seen_lanes = HashSet::new();
        let mut seen_requests = HashSet::new();
        for lane in &self.lanes {
            if lane.lane >= num_lanes {
                return Err(Error::LaneOutOfRange {
                    lane: lane.lane,
                    num_lanes,
                });
            }
            if !seen_lanes.insert(lane.lane) {
                return Err(Error::Plan(format!("lane {} listed twice", lane.lane)));
            }
            let mut cursor = 0;
            for s in &lane.segments {
                if s.num_timesteps == 0 {
                    return Err(Error::Plan(format!("empty segment for request {}", s.request)));
                }
                if s.lane_offset < cursor {
                    return Err(Error::Plan(format!("overlapping segments on lane {}", lane.lane)));
                }
                cursor = s.lane_end();
                if !seen_requests.insert(s.request) {
                    return Err(Error::Plan(format!("request {} assigned twice", s.request)));
                }
            }
            if cursor > self.lane_budget {
                return Err(Error::Plan(format!(
                    "lane {} needs {} steps but the budget is {}",
                    lane.lane, cursor, self.lane_budget
                )));
            }
        }
        Ok(())
    }
}
