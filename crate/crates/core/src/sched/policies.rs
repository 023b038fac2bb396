//! Pure batch-formation rules. Each takes the waiting requests in age order
//! and returns the plan for the next dispatch; the runtime applies the plan to
//! its queue.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::partition::greedy_partition;
use super::plan::{BatchPlan, LaneAssignment, LayerSpan};
use crate::workload::RequestId;

/// A request (or the unfinished tail of one) waiting for a dispatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueuedRequest {
    pub id: RequestId,
    pub arrival_time: f64,
    pub total_time_steps: u32,
    /// Time-steps already evaluated through every layer.
    pub done_time_steps: u32,
}

impl QueuedRequest {
    pub fn remaining(&self) -> u32 {
        self.total_time_steps - self.done_time_steps
    }
}

fn one_per_lane<'a>(batch_id: u64, requests: impl Iterator<Item = &'a QueuedRequest>) -> BatchPlan {
    let lanes: Vec<LaneAssignment> = requests
        .enumerate()
        .map(|(lane, r)| {
            let mut a = LaneAssignment::new(lane);
            a.push(r.id, r.done_time_steps, r.remaining(), 0);
            a
        })
        .collect();
    let lane_budget = lanes.iter().map(LaneAssignment::useful_timesteps).max().unwrap_or(0);
    BatchPlan {
        batch_id,
        lanes,
        lane_budget,
        layer_span: LayerSpan::AllLayers,
        joins_enabled: false,
        power_gating: false,
    }
}

/// The `batch_size` oldest requests, one per lane, padded to the longest.
pub fn form_batch_padding(queue: &[QueuedRequest], batch_size: usize, batch_id: u64) -> BatchPlan {
    one_per_lane(batch_id, queue.iter().take(batch_size))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketingMode {
    /// Fixed ranges `[k(w+1), k(w+1)+w]`.
    #[default]
    FixedRange,
    /// A request joins an open bucket whose centre is within `w` of its length,
    /// otherwise it opens a new bucket centred on itself.
    Centered,
}

/// Bucket key of a length under fixed-range bucketing.
pub fn fixed_bucket(len: u32, width: u32) -> u32 {
    len / (width + 1)
}

/// Groups `queue` into buckets and returns them keyed by bucket, each in age
/// order. Centered buckets are keyed by centre.
pub fn assign_buckets(queue: &[QueuedRequest], width: u32, mode: BucketingMode) -> BTreeMap<u32, Vec<usize>> {
    let mut buckets: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in queue.iter().enumerate() {
        let len = r.remaining();
        let key = match mode {
            BucketingMode::FixedRange => fixed_bucket(len, width),
            BucketingMode::Centered => nearest_centre(buckets.keys().copied(), len, width).unwrap_or(len),
        };
        buckets.entry(key).or_default().push(i);
    }
    buckets
}

/// Closest existing centre within `width` of `len`; ties go to the smaller centre.
pub fn nearest_centre(centres: impl Iterator<Item = u32>, len: u32, width: u32) -> Option<u32> {
    centres
        .filter(|&c| c.abs_diff(len) <= width)
        .min_by_key(|&c| (c.abs_diff(len), c))
}

/// Up to `batch_size` requests, FIFO, from the bucket of the oldest request.
pub fn form_batch_bucketing(
    queue: &[QueuedRequest],
    batch_size: usize,
    bucket_width: u32,
    mode: BucketingMode,
    batch_id: u64,
) -> BatchPlan {
    let Some(oldest) = queue.first() else {
        return one_per_lane(batch_id, std::iter::empty());
    };
    // Equivalent to `assign_buckets` restricted to the oldest request's bucket,
    // but stops as soon as the batch is full.
    let target = match mode {
        BucketingMode::FixedRange => fixed_bucket(oldest.remaining(), bucket_width),
        BucketingMode::Centered => oldest.remaining(),
    };
    let mut centres = std::collections::BTreeSet::new();
    let mut picked = Vec::with_capacity(batch_size);
    for r in queue {
        if picked.len() == batch_size {
            break;
        }
        let len = r.remaining();
        let key = match mode {
            BucketingMode::FixedRange => fixed_bucket(len, bucket_width),
            BucketingMode::Centered => {
                let c = nearest_centre(
                    centres
                        .range(len.saturating_sub(bucket_width)..=len + bucket_width)
                        .copied(),
                    len,
                    bucket_width,
                )
                .unwrap_or(len);
                centres.insert(c);
                c
            }
        };
        if key == target {
            picked.push(r);
        }
    }
    one_per_lane(batch_id, picked.into_iter())
}

/// E-Batch: LPT over every waiting request, lanes concatenate sequences, and
/// each lane is clocked for the budget: `N` time-steps, or the longest
/// remaining sequence when `N` is 0. Requests that do not fit are split;
/// requests that get no slot at all stay queued. Lanes that run dry before
/// the budget are refilled or gated while the first layer executes.
pub fn form_batch_ebatch(queue: &[QueuedRequest], num_lanes: usize, max_per_lane: u32, batch_id: u64) -> BatchPlan {
    let lengths: Vec<u32> = queue.iter().map(QueuedRequest::remaining).collect();
    let partition = greedy_partition(&lengths, num_lanes);
    let lane_budget = if max_per_lane > 0 {
        max_per_lane
    } else {
        lengths.iter().copied().max().unwrap_or(0)
    };

    let lanes = partition
        .iter()
        .enumerate()
        .map(|(lane, members)| {
            let mut a = LaneAssignment::new(lane);
            for &i in members {
                let room = lane_budget - a.end_offset();
                if room == 0 {
                    break;
                }
                let r = &queue[i];
                a.push(r.id, r.done_time_steps, r.remaining().min(room), 0);
            }
            a
        })
        .collect();
    BatchPlan {
        batch_id,
        lanes,
        lane_budget,
        layer_span: LayerSpan::AllLayers,
        joins_enabled: true,
        power_gating: true,
    }
}

/// Progress of a request under cellular batching. Requests advance one cell
/// at a time through the whole layer stack: cell `c` on layers `0..L`, then
/// cell `c + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProgress {
    pub id: RequestId,
    pub total_time_steps: u32,
    /// First time-step of the current cell.
    pub cell_start: u32,
    pub layer: usize,
}

impl CellProgress {
    pub fn new(id: RequestId, total_time_steps: u32) -> Self {
        CellProgress {
            id,
            total_time_steps,
            cell_start: 0,
            layer: 0,
        }
    }

    pub fn cell_len(&self, granularity: u32) -> u32 {
        granularity.min(self.total_time_steps - self.cell_start)
    }

    /// Moves past the current (cell, layer). Returns true when the request is done.
    pub fn advance(&mut self, granularity: u32, num_layers: usize) -> bool {
        self.layer += 1;
        if self.layer == num_layers {
            self.layer = 0;
            self.cell_start += self.cell_len(granularity);
        }
        self.cell_start >= self.total_time_steps
    }
}

/// Cellular batching: the layer of the oldest running request is selected and
/// up to `batch_size` of the oldest requests at that layer run one cell each.
/// `running` must be in age order.
pub fn step_cellular<'a, I>(running: I, batch_size: usize, granularity: u32, batch_id: u64) -> Option<BatchPlan>
where
    I: IntoIterator<Item = &'a CellProgress>,
    I::IntoIter: Clone,
{
    let running = running.into_iter();
    let layer = running.clone().next()?.layer;
    let lanes: Vec<LaneAssignment> = running
        .filter(|r| r.layer == layer)
        .take(batch_size)
        .enumerate()
        .map(|(lane, r)| {
            let mut a = LaneAssignment::new(lane);
            a.push(r.id, r.cell_start, r.cell_len(granularity), 0);
            a
        })
        .collect();
    let lane_budget = lanes.iter().map(LaneAssignment::useful_timesteps).max().unwrap_or(0);
    Some(BatchPlan {
        batch_id,
        lanes,
        lane_budget,
        layer_span: LayerSpan::single(layer),
        joins_enabled: false,
        power_gating: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(lengths: &[u32]) -> Vec<QueuedRequest> {
        lengths
            .iter()
            .enumerate()
            .map(|(i, &len)| QueuedRequest {
                id: i as u64 + 1,
                arrival_time: 0.0,
                total_time_steps: len,
                done_time_steps: 0,
            })
            .collect()
    }

    fn ids(plan: &BatchPlan) -> Vec<u64> {
        let mut v: Vec<u64> = plan.segments().map(|(_, s)| s.request).collect();
        v.sort();
        v
    }

    #[test]
    fn padding_pads_to_longest() {
        let p = form_batch_padding(&q(&[1, 2, 3, 4, 3, 2]), 4, 0);
        assert_eq!(p.lane_budget, 4);
        assert_eq!(p.padded_timesteps(), 6);
        assert_eq!(ids(&p), [1, 2, 3, 4]);
        assert_eq!(form_batch_padding(&q(&[5]), 4, 0).padded_timesteps(), 0);
        assert_eq!(form_batch_padding(&q(&[3, 3, 3]), 4, 0).padded_timesteps(), 0);
    }

    #[test]
    fn fixed_range_buckets() {
        let queue = q(&[1, 2, 4, 5, 3, 2]);
        let p = form_batch_bucketing(&queue, 4, 1, BucketingMode::FixedRange, 0);
        assert_eq!(ids(&p), [1]);
        let rest = &queue[1..];
        let p = form_batch_bucketing(rest, 4, 1, BucketingMode::FixedRange, 1);
        assert_eq!(ids(&p), [2, 5, 6]);
    }

    #[test]
    fn centered_buckets_match_the_textbook_grouping() {
        let queue = q(&[1, 2, 4, 5, 3, 2]);
        let b = assign_buckets(&queue, 1, BucketingMode::Centered);
        let groups: Vec<Vec<usize>> = b.into_values().collect();
        assert_eq!(groups, vec![vec![0, 1, 5], vec![2, 3, 4]]);
        let p = form_batch_bucketing(&queue[2..], 4, 1, BucketingMode::Centered, 0);
        assert_eq!(ids(&p), [3, 4, 5]);
    }

    #[test]
    fn early_exit_matches_full_assignment() {
        let queue = q(&[9, 3, 10, 8, 4, 11, 9, 2, 10, 10, 12, 9]);
        for mode in [BucketingMode::FixedRange, BucketingMode::Centered] {
            for width in 0..4 {
                let full = assign_buckets(&queue, width, mode);
                let expect: Vec<u64> = full
                    .values()
                    .find(|m| m[0] == 0)
                    .unwrap()
                    .iter()
                    .take(3)
                    .map(|&i| queue[i].id)
                    .collect();
                let mut got = ids(&form_batch_bucketing(&queue, 3, width, mode, 0));
                let mut expect = expect;
                expect.sort();
                got.sort();
                assert_eq!(got, expect, "{mode:?} width {width}");
            }
        }
    }

    #[test]
    fn width_zero_only_equal_lengths() {
        let p = form_batch_bucketing(&q(&[3, 4, 3, 3]), 4, 0, BucketingMode::FixedRange, 0);
        assert_eq!(ids(&p), [1, 3, 4]);
        assert_eq!(p.padded_timesteps(), 0);
    }

    #[test]
    fn wide_bucket_is_padding() {
        let queue = q(&[7, 1, 9, 4, 2]);
        let a = form_batch_bucketing(&queue, 4, 9, BucketingMode::FixedRange, 0);
        let b = form_batch_padding(&queue, 4, 0);
        assert_eq!(a, b);
    }

    #[test]
    fn ebatch_caps_budget_and_splits() {
        let p = form_batch_ebatch(&q(&[1, 2, 3, 5]), 4, 3, 0);
        assert_eq!(p.lane_budget, 3);
        let seg4 = p.segments().find(|(_, s)| s.request == 4).unwrap().1;
        assert_eq!(seg4.num_timesteps, 3);
        assert!(p.joins_enabled);
    }

    #[test]
    fn ebatch_n0_uses_longest_sequence() {
        let p = form_batch_ebatch(&q(&[8, 7, 6, 5, 4]), 2, 0, 0);
        assert_eq!(p.lane_budget, 8);
        let p = form_batch_ebatch(&q(&[3, 3, 3, 3]), 4, 5, 0);
        assert_eq!(p.lane_budget, 5);
        assert_eq!(p.lanes.iter().filter(|l| l.segments.len() == 1).count(), 4);
    }

    #[test]
    fn ebatch_large_n_concatenates() {
        let p = form_batch_ebatch(&q(&[8, 7, 6, 5, 4]), 2, 100, 0);
        assert_eq!(p.lane_budget, 100);
        let totals: Vec<u32> = p.lanes.iter().map(|l| l.useful_timesteps()).collect();
        assert_eq!(totals, [17, 13]);
    }

    #[test]
    fn cellular_first_step_and_retirement() {
        let mut running: Vec<CellProgress> = [1, 2, 3, 4]
            .iter()
            .enumerate()
            .map(|(i, &l)| CellProgress::new(i as u64 + 1, l))
            .collect();
        let p = step_cellular(&running, 4, 1, 0).unwrap();
        assert_eq!(p.lane_budget, 1);
        assert_eq!(p.lanes.len(), 4);
        let done: Vec<bool> = running.iter_mut().map(|r| r.advance(1, 1)).collect();
        assert_eq!(done, [true, false, false, false]);
    }

    #[test]
    fn cellular_groups_by_oldest_layer() {
        let mut a = CellProgress::new(1, 4);
        a.layer = 1;
        let b = CellProgress::new(2, 4);
        let mut c = CellProgress::new(3, 4);
        c.layer = 1;
        let p = step_cellular(&[a, b, c], 4, 2, 0).unwrap();
        assert_eq!(p.layer_span, LayerSpan::single(1));
        assert_eq!(ids(&p), [1, 3]);
        assert_eq!(p.lane_budget, 2);
    }
}
