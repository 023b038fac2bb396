//! Greedy multi-way number partitioning (longest processing time first).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Assigns each length to a lane: lengths are visited in descending order
/// (ties by original index) and each goes to the lane with the smallest total
/// so far (ties by lane index). Returns per-lane index lists in assignment
/// order.
pub fn greedy_partition(lengths: &[u32], num_lanes: usize) -> Vec<Vec<usize>> {
    let mut lanes = vec![Vec::new(); num_lanes];
    if num_lanes == 0 || lengths.is_empty() {
        return lanes;
    }

    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&i| (Reverse(lengths[i]), i));

    let mut totals: BinaryHeap<Reverse<(u64, usize)>> = (0..num_lanes).map(|l| Reverse((0, l))).collect();
    for idx in order {
        let Reverse((total, lane)) = totals.pop().expect("num_lanes > 0");
        lanes[lane].push(idx);
        totals.push(Reverse((total + lengths[idx] as u64, lane)));
    }
    lanes
}

/// Sum of lengths per lane for a partition.
pub fn lane_totals(lengths: &[u32], partition: &[Vec<usize>]) -> Vec<u64> {
    partition
        .iter()
        .map(|lane| lane.iter().map(|&i| lengths[i] as u64).sum())
        .collect()
}
